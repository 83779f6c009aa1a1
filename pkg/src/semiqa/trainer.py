"""Alternating training of the span reader and the question generator.

The loop follows the two-player objective: the reader D maximizes span
log-likelihood on labeled data (tagged as human) plus generated data
(tagged as model output), while the generator G maximizes the reader's
log-likelihood of the gold span on its own samples presented under the
human tag. G updates use score-function (REINFORCE) gradients with a
moving-average reward baseline because sampled questions are discrete.

Method roster, ordered from plain supervision to the full scheme:
  sl                 reader on labeled data only
  context            plus window-context pseudo-questions from unlabeled data
  context+domain     same, with domain tags separating the two sources
  gen                plus generator questions (generator trained by MLE, fixed)
  gen+domain         same, with domain tags
  gen+domain+adv     tags plus reinforcement fine-tuning of the generator
"""

import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .corpus import DomainTag, QAInstance, context_question
from .evaluator import evaluate
from .generator import Generator
from .numerics import GradTape, NumericsError, add, neg
from .reader import Reader
from .utils import parallel_map, stable_seed

METHODS = ("sl", "context", "context+domain", "gen", "gen+domain",
           "gen+domain+adv")


class TrainerError(Exception):
    pass


@dataclass
class TrainConfig:
    method: str = "gen+domain+adv"
    labeling_rate: float = 0.1
    unlabeled_size: int = 0        # cap on |U|; 0 keeps everything provided
    t_d: int = 200                 # reader SGD steps per outer iteration
    t_g: int = 200                 # generator RL steps per outer iteration
    lr_d: float = 0.1
    lr_g: float = 0.01
    pretrain_epochs: int = 20
    batch_size: int = 32
    patience: int = 5              # dev evaluations without improvement
    max_outer_iters: int = 0       # hard cap; 0 runs until patience stops
    seed: int = 0
    span_max: int = 15
    layers: int = 2
    hidden_dim: int = 64
    embed_dim: int = 32
    gen_hidden_dim: int = 64
    gen_embed_dim: int = 32
    window: int = 5                # context words kept on each side
    gen_max_len: int = 20
    grad_clip: float = 5.0
    baseline_decay: float = 0.99

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.method not in METHODS:
            raise TrainerError(f"unknown method {self.method!r}; "
                               f"expected one of {', '.join(METHODS)}")
        if not 0.0 < self.labeling_rate <= 0.9:
            raise TrainerError("labeling_rate must be in (0, 0.9]")
        for name in ("t_d", "t_g", "batch_size", "patience", "layers",
                     "hidden_dim", "embed_dim", "gen_hidden_dim",
                     "gen_embed_dim", "window", "gen_max_len", "span_max"):
            if getattr(self, name) < 1:
                raise TrainerError(f"{name} must be >= 1")
        for name in ("pretrain_epochs", "unlabeled_size", "max_outer_iters"):
            if getattr(self, name) < 0:
                raise TrainerError(f"{name} must be >= 0")
        for name in ("lr_d", "lr_g"):
            if getattr(self, name) <= 0:
                raise TrainerError(f"{name} must be positive")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise TrainerError("baseline_decay must be in [0, 1)")

    @property
    def uses_tags(self):
        return "domain" in self.method

    @property
    def uses_generator(self):
        return self.method.startswith("gen")

    @property
    def uses_context(self):
        return self.method.startswith("context")

    @property
    def uses_adv(self):
        return self.method == "gen+domain+adv"

    @property
    def uses_unlabeled(self):
        return self.method != "sl"

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise TrainerError(f"unknown config key {unknown[0]!r}")
        return cls(**obj)


@dataclass
class RLStep:
    """One REINFORCE update: the action, its reward, and the advantage."""
    question: list
    reward: float
    baseline: float
    advantage: float

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise TrainerError("non-finite reward")


@dataclass
class TrainResult:
    trace: list
    best_dev_f1: float
    best_dev_em: float
    best_step: int
    best_values: dict
    pretrain_losses: list = field(default_factory=list)
    skipped: int = 0
    outer_iters: int = 0


def _now_ms():
    return time.perf_counter() * 1000.0


def build_reader(config, vocab):
    """Reader sized per config, seeded from the run seed's 'reader' stream."""
    return Reader(
        vocab_size=len(vocab), embed_dim=config.embed_dim,
        hidden_dim=config.hidden_dim, layers=config.layers,
        span_max=config.span_max, seed=stable_seed(config.seed, "reader"))


def build_generator(config, vocab):
    return Generator(
        vocab, embed_dim=config.gen_embed_dim,
        hidden_dim=config.gen_hidden_dim, max_len=config.gen_max_len,
        seed=stable_seed(config.seed, "generator"))


class Trainer:
    """Owns both models, the data pools, and all RNG streams for one run."""

    def __init__(self, config, vocab, labeled, unlabeled, dev):
        config.validate()
        if not labeled:
            raise TrainerError("labeled set is empty")
        if not dev:
            raise TrainerError("dev set is empty")
        self.config = config
        self.vocab = vocab
        self.labeled = list(labeled)
        self.unlabeled = list(unlabeled)
        if config.unlabeled_size:
            self.unlabeled = self.unlabeled[:config.unlabeled_size]
        if config.uses_unlabeled and not self.unlabeled:
            raise TrainerError(
                f"method {config.method!r} needs unlabeled examples")
        self.dev = list(dev)

        self.reader = build_reader(config, vocab)
        self.generator = build_generator(config, vocab) if config.uses_generator else None

        self.batch_rng = np.random.default_rng(stable_seed(config.seed, "batch"))
        self.sample_rng = np.random.default_rng(stable_seed(config.seed, "sample"))

        self.u_g = []
        self.baseline = None
        self.trace = []
        self.pretrain_losses = []
        self.global_step = 0
        self.outer_iter = 0
        self.best_dev_f1 = -1.0
        self.best_dev_em = 0.0
        self.best_step = -1
        self.best_values = self.reader.store.copy_values()
        self.evals_since_best = 0
        self.skipped = 0
        self.pretrained = False

    # -- bookkeeping ------------------------------------------------------

    def _record(self, phase, objective=None, dev_f1=None, dev_em=None,
                started=None):
        self.global_step += 1
        wall = 0.0 if started is None else _now_ms() - started
        self.trace.append({"step": self.global_step, "phase": phase,
                           "objective": objective, "dev_f1": dev_f1,
                           "dev_em": dev_em, "wall_ms": wall})

    def _draw(self, pool):
        n = min(self.config.batch_size, len(pool))
        idx = self.batch_rng.choice(len(pool), size=n, replace=False)
        return [pool[int(i)] for i in idx]

    def _check_finite(self, value, what):
        if not math.isfinite(value):
            raise NumericsError(f"{what} became non-finite at step "
                                f"{self.global_step}")

    # -- phases -----------------------------------------------------------

    def pretrain_generator(self):
        """MLE epochs of G over the labeled questions; returns epoch losses."""
        cfg = self.config
        if not cfg.uses_generator:
            return []
        for _ in range(cfg.pretrain_epochs):
            started = _now_ms()
            order = self.batch_rng.permutation(len(self.labeled))
            total, count = 0.0, 0
            for lo in range(0, len(order), cfg.batch_size):
                batch = [self.labeled[int(i)] for i in order[lo:lo + cfg.batch_size]]
                with GradTape() as tape:
                    res = self.generator.mle_loss(batch)
                    self.generator.store.zero_grad()
                    tape.backward(res.loss)
                value = res.loss.item()
                self._check_finite(value, "generator MLE loss")
                self.generator.store.sgd_step(cfg.lr_g, cfg.grad_clip)
                total += value * len(batch)
                count += len(batch)
            epoch_loss = total / count
            self.pretrain_losses.append(epoch_loss)
            self._record("mle", objective=epoch_loss, started=started)
        self.pretrained = True
        return self.pretrain_losses

    def build_u_g(self):
        """(Re)build the synthetic question set for the reader."""
        cfg = self.config
        out = []
        if cfg.uses_context:
            for ex in self.unlabeled:
                q_ids = context_question(ex.paragraph, ex.span, cfg.window)
                q_toks = context_question(ex.paragraph_tokens, ex.span,
                                          cfg.window)
                if not q_ids:
                    self.skipped += 1
                    continue
                out.append(self._pseudo_instance(ex, q_ids, q_toks))
        elif cfg.uses_generator:
            def one(ex):
                return self.generator.greedy_question(
                    ex.paragraph, ex.paragraph_tokens, ex.span)

            for ex, toks in zip(self.unlabeled, parallel_map(one, self.unlabeled)):
                if not toks:
                    self.skipped += 1
                    continue
                out.append(self._pseudo_instance(ex, self.vocab.encode(toks),
                                                 toks))
        if cfg.uses_unlabeled and not out:
            raise TrainerError(
                f"method {cfg.method!r} produced no usable questions")
        self.u_g = out
        return out

    def _pseudo_instance(self, ex, q_ids, q_toks):
        return QAInstance(paragraph=ex.paragraph, question=q_ids,
                          span=ex.span, article_id=ex.article_id,
                          paragraph_tokens=ex.paragraph_tokens,
                          question_tokens=q_toks)

    def d_phase(self):
        """T_D reader steps on paired labeled/generated batches."""
        cfg = self.config
        tag_l = DomainTag.D_TRUE if cfg.uses_tags else None
        tag_u = DomainTag.D_GEN if cfg.uses_tags else None
        for _ in range(cfg.t_d):
            started = _now_ms()
            batch_l = self._draw(self.labeled)
            batch_u = self._draw(self.u_g) if self.u_g else []
            with GradTape() as tape:
                objective = self.reader.d_loss(batch_l, tag_l)
                if batch_u:
                    objective = add(objective,
                                    self.reader.d_loss(batch_u, tag_u))
                loss = neg(objective)
                self.reader.store.zero_grad()
                tape.backward(loss)
            value = objective.item()
            self._check_finite(value, "reader objective")
            self.reader.store.sgd_step(cfg.lr_d, cfg.grad_clip)
            self._record("d", objective=value, started=started)

    def g_phase(self):
        """T_G REINFORCE updates of G against the frozen reader."""
        cfg = self.config
        tag = DomainTag.D_TRUE if cfg.uses_tags else None  # present as human
        steps = []
        for _ in range(cfg.t_g):
            started = _now_ms()
            ex = self.unlabeled[int(self.sample_rng.integers(len(self.unlabeled)))]
            seed = int(self.sample_rng.integers(2 ** 63))
            sample = self.generator.sample_question(
                ex.paragraph, ex.paragraph_tokens, ex.span, seed=seed)
            if not sample.tokens:
                self.skipped += 1
                continue
            reward = self.reader.span_log_prob(
                ex.paragraph, self.vocab.encode(sample.tokens), ex.span,
                tag).item()
            if not math.isfinite(reward):
                self.skipped += 1
                continue
            if self.baseline is None:
                self.baseline = reward
            step = RLStep(question=sample.tokens, reward=reward,
                          baseline=self.baseline,
                          advantage=reward - self.baseline)
            self.baseline = (cfg.baseline_decay * self.baseline
                             + (1.0 - cfg.baseline_decay) * reward)
            with GradTape() as tape:
                log_prob = self.generator.sequence_log_prob(
                    ex.paragraph, ex.paragraph_tokens, ex.span,
                    sample.tokens, ended=sample.ended)
                loss = log_prob * (-step.advantage)
                self.generator.store.zero_grad()
                tape.backward(loss)
            self.generator.store.sgd_step(cfg.lr_g, cfg.grad_clip)
            steps.append(step)
            self._record("g", objective=reward, started=started)
        return steps

    def evaluate_dev(self):
        started = _now_ms()
        tag = DomainTag.D_TRUE if self.config.uses_tags else None
        f1, em = evaluate(self.reader, self.dev, tag=tag)
        self._record("eval", dev_f1=f1, dev_em=em, started=started)
        if f1 > self.best_dev_f1:
            self.best_dev_f1 = f1
            self.best_dev_em = em
            self.best_step = self.global_step
            self.best_values = self.reader.store.copy_values()
            self.evals_since_best = 0
        else:
            self.evals_since_best += 1
        return f1, em

    # -- outer loop -------------------------------------------------------

    def outer_iteration(self):
        cfg = self.config
        if cfg.uses_unlabeled and (cfg.uses_adv or not self.u_g):
            self.build_u_g()  # adv refreshes from the current G every pass
        self.d_phase()
        if cfg.uses_adv:
            self.g_phase()
        self.evaluate_dev()
        self.outer_iter += 1

    def should_stop(self):
        cfg = self.config
        if cfg.max_outer_iters and self.outer_iter >= cfg.max_outer_iters:
            return True
        return self.evals_since_best >= cfg.patience

    def run(self):
        if self.config.uses_generator and not self.pretrained:
            self.pretrain_generator()
        while not self.should_stop():
            self.outer_iteration()
        return self.result()

    def result(self):
        return TrainResult(
            trace=list(self.trace), best_dev_f1=self.best_dev_f1,
            best_dev_em=self.best_dev_em, best_step=self.best_step,
            best_values={k: v.copy() for k, v in self.best_values.items()},
            pretrain_losses=list(self.pretrain_losses), skipped=self.skipped,
            outer_iters=self.outer_iter)


def train(config, vocab, labeled, unlabeled, dev):
    """One-call wrapper: build a Trainer, run to the stop condition."""
    trainer = Trainer(config, vocab, labeled, unlabeled, dev)
    return trainer, trainer.run()
