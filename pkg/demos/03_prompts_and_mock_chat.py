"""
Prompt assembly and a mock chat round trip
==========================================

Builds the system prompt and the per-instance info prompt, assembles the
message list exactly as the service would, and runs it against the
deterministic echoing mock backend.
"""

from shapchat import (
    BackendConfig,
    BackgroundSet,
    MockBackend,
    SystemPromptConfig,
    TrainParams,
    assemble_messages,
    build_info_prompt,
    build_system_prompt,
    chat_complete,
    generate_synthetic_battery_table,
    kernel_shap,
    train_gbdt,
)

table = generate_synthetic_battery_table(200, noise_sigma=0.01, seed=3)
model = train_gbdt(table, TrainParams(n_trees=30, max_depth=3, learning_rate=0.2, seed=3))
background = BackgroundSet.from_table(table, max_rows=40, seed=3)

system = build_system_prompt(
    SystemPromptConfig(
        domain_name="battery State of Health prediction",
        expected_question_kinds=("domain questions", "inferential questions about one battery"),
        style_rules=("be concise", "cite the attribution values you were given"),
    )
)
print("--- system prompt ---")
print(system)

instance = ("NMC", 1800.0, 38.0, 85.0, 2.2, 2200.0, 60.0)
explanation = kernel_shap(model, instance, background, budget="all")
info = build_info_prompt(explanation, model.schema, "One uploaded battery snapshot.", k=20)
print("\n--- info prompt ---")
print(info.rendered)

messages = assemble_messages(system, info, history=[], question="Why is this battery degraded?")
print(f"\nassembled {len(messages)} messages: {[m.role for m in messages]}")

# the echo mock answers by naming the top feature it finds in the info prompt
config = BackendConfig(base_url="http://demo", model_name="mock")
response = chat_complete(config, messages, transport=MockBackend(mode="echo_top_feature"))
print(f"\nassistant: {response.content}")
