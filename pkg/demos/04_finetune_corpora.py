"""
The three fine-tuning corpora
=============================

Stage 1 splits domain documents 9/1 into train/eval, stage 2 distills the
batch attribution statistics into one training document, stage 3 generates
matching instruction/answer sets. Each stage ships hyperparameters for
external LoRA tooling.
"""

from shapchat import (
    BackgroundSet,
    DomainCategory,
    TrainParams,
    finetune_config_for_step,
    generate_alignment_dataset,
    generate_global_explanation_doc,
    generate_synthetic_battery_table,
    split_in_domain_corpus,
    train_gbdt,
)
from shapchat.finetune import records_to_jsonl

# stage 1: in-domain corpus split (documents would normally come from files)
category = DomainCategory(
    name="batteries",
    documents=tuple((f"battery-doc-{i}", f"...text of document {i}...") for i in range(10)),
)
split = split_in_domain_corpus(category, eval_doc_id="auto", seed=1)
print(f"stage 1: {len(split.train_docs)} train docs, eval doc = {split.eval_doc[0]}")
print(f"         config: {finetune_config_for_step('in_domain').to_json()}")

table = generate_synthetic_battery_table(120, noise_sigma=0.01, seed=11)
model = train_gbdt(table, TrainParams(n_trees=30, max_depth=3, learning_rate=0.2, seed=11))
background = BackgroundSet.from_table(table, max_rows=20, seed=11)

# stage 2: the global-explanation training document
doc = generate_global_explanation_doc(model, table, background, "battery_type")
print("\nstage 2 document (first 12 lines):")
print("\n".join(doc.splitlines()[:12]))

# stage 3: human-alignment Q&A records in alpaca format
dataset = generate_alignment_dataset(model, table, background, k=20, train_frac=0.8, seed=11)
print(f"\nstage 3: {len(dataset.train)} train / {len(dataset.eval)} eval records")
first_line = records_to_jsonl(dataset.train[:1]).strip()
print(f"first record: {first_line[:140]}...")
print(f"config: {finetune_config_for_step('human_alignment').to_json()}")
