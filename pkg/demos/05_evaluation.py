"""
Perplexity, loss, and the ablation table
========================================

Backend-relative metric arithmetic: perplexity identities, Q&A loss with a
constant mock scorer, and improvement percentages arranged into the
multi-stage ablation report.
"""

import math

from shapchat import (
    AblationStage,
    BackendConfig,
    MockBackend,
    TokenScore,
    build_ablation_report,
    improvement_pct,
    perplexity,
    qa_loss,
    score_tokens,
)
from shapchat.evaluation import render_ablation_text
from shapchat.finetune import QARecord
from shapchat.prompts import AlpacaRecord

# uniform scores over a vocabulary of 10 give perplexity exactly 10
uniform = [TokenScore(token_text=f"t{i}", logprob=math.log(1 / 10)) for i in range(50)]
print(f"uniform-vocab perplexity: {perplexity(uniform):.6f}")

# scoring through the mock backend composes with the same arithmetic
config = BackendConfig(base_url="http://demo")
scores = score_tokens(config, "", "hello world", transport=MockBackend(token_logprob=-0.5))
print(f"mock-scored perplexity of 'hello world': {perplexity(scores):.6f} (= e^0.5)")

records = [
    QARecord(
        record=AlpacaRecord(instruction="why?", input="ctx", output="because of cycling"),
        row_index=i, seed=0, template_id=0,
    )
    for i in range(4)
]
loss = qa_loss(records, lambda p, t: [TokenScore(token_text=c, logprob=-0.5) for c in t])
print(f"constant-scorer loss: {loss:.3f}")

# a three-stage ablation: improvements annotate each stage's own column
stages = [
    AblationStage("baseline", {"ppl_domain": 11.44, "qa_loss": 2.56}),
    AblationStage("+ in-domain", {"ppl_domain": 9.94, "qa_loss": 2.31}, highlight=("ppl_domain",)),
    AblationStage("+ alignment", {"ppl_domain": 9.93, "qa_loss": 1.12}, highlight=("qa_loss",)),
]
report = build_ablation_report(stages)
print("\n" + render_ablation_text(report))
print(f"(2.31 -> 1.12 is a {improvement_pct(2.31, 1.12):.1f}% improvement)")
