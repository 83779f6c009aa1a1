"""Teach the question generator a tiny corpus and watch the copy gate work.

The generator emits each question token either from its closed vocabulary
or by copying a paragraph position, so it can name out-of-vocabulary
entities it has never embedded. Likelihood training on four instances is
enough to see both paths in action.
"""

from semiqa.corpus import QAInstance, Vocabulary
from semiqa.generator import Generator
from semiqa.numerics import GradTape

VOCAB = Vocabulary(["what", "is", "the", "of", "capital", "population",
                    "france", "paris", "big"])

# the fourth paragraph names an entity the vocabulary has never seen;
# its gold question can only be produced by copying
RAW = [
    ("the capital of france is paris", "what is the capital of france", (6, 6)),
    ("the population of france is big", "what is the population of france", (6, 6)),
    ("paris is the capital", "what is the capital", (1, 1)),
    ("the capital of zembla is paris", "what is the capital of zembla", (6, 6)),
]

def instance(i, para, question, span):
    p, q = para.split(), question.split()
    return QAInstance(paragraph=VOCAB.encode(p), question=VOCAB.encode(q),
                      span=span, article_id=f"d{i}", paragraph_tokens=p,
                      question_tokens=q)

data = [instance(i, *row) for i, row in enumerate(RAW)]
gen = Generator(VOCAB, embed_dim=8, hidden_dim=10, max_len=8, seed=4)

def show(label):
    print(f"\n== greedy questions {label} ==")
    for inst in data:
        toks = gen.greedy_question(inst.paragraph, inst.paragraph_tokens,
                                   inst.span)
        print(f"  {' '.join(inst.paragraph_tokens)!r}")
        print(f"    -> {' '.join(toks) or '(empty)'}")

show("before training")

for epoch in range(300):
    with GradTape() as tape:
        res = gen.mle_loss(data)
        gen.store.zero_grad()
        tape.backward(res.loss)
    gen.store.sgd_step(lr=0.3, clip=5.0)
    if epoch % 60 == 0:
        print(f"epoch {epoch:3d}  nll/token "
              f"{res.loss.item() / res.steps:.4f}")

show("after training")

# "zembla" is not in VOCAB, so any correct question for the last
# paragraph proves the copy path fired
last = data[-1]
toks = gen.greedy_question(last.paragraph, last.paragraph_tokens, last.span)
assert "zembla" in toks, "copy mechanism failed to surface the OOV entity"
print("\ncopied OOV entity:", [t for t in toks if t not in VOCAB])

print("\n== sampled variety (same paragraph, different seeds) ==")
for seed in range(4):
    s = gen.sample_question(last.paragraph, last.paragraph_tokens,
                            last.span, seed=seed)
    print(f"  seed {seed}: {' '.join(s.tokens)!r}  "
          f"log p = {s.total:.2f}")
