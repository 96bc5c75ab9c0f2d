"""shapchat: tree-ensemble prediction with Shapley attributions wired into
an LLM chat pipeline - prompt assembly, fine-tuning corpora, evaluation
metrics, an HTTP chat service, and a CLI.
"""

__version__ = "0.1.0"

from .attribution import (
    BackgroundSet,
    Explanation,
    coalition_value,
    exact_shap,
    explain_table,
    kernel_shap,
    shapley_kernel_weight,
)
from .boosting import TrainParams, train_gbdt
from .evaluation import (
    AblationStage,
    EvalReport,
    TokenScore,
    build_ablation_report,
    improvement_pct,
    perplexity,
    qa_loss,
)
from .finetune import (
    AlignmentDataset,
    DomainCategory,
    FinetuneConfig,
    QARecord,
    finetune_config_for_step,
    generate_alignment_dataset,
    generate_global_explanation_doc,
    split_in_domain_corpus,
)
from .llm import BackendConfig, ChatResponse, MockBackend, chat_complete, score_tokens
from .model import (
    DataTable,
    Feature,
    FeatureSchema,
    TreeEnsemble,
    load_ensemble,
    load_table_csv,
    save_ensemble,
    save_table_csv,
)
from .prompts import (
    AlpacaRecord,
    ChatMessage,
    InfoPrompt,
    SystemPromptConfig,
    assemble_messages,
    build_info_prompt,
    build_system_prompt,
    parse_alpaca,
    render_alpaca,
    select_top_features,
)
from .summaries import (
    DependenceData,
    GlobalSummary,
    WaterfallData,
    dependence_data,
    global_summary,
    top_features,
    waterfall_data,
)
from .synth import BATTERY_SCHEMA, generate_synthetic_battery_table, soh_ground_truth
