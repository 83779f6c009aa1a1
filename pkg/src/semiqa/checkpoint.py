"""Binary training checkpoints.

Layout: magic ``GDAN``, format version (u16), section count (u32), then
sections of (name length u16, name, payload length u64, payload), all
little-endian. Sections carry the vocabulary, both parameter stores, the
flat config, the RNG stream states, and the trainer loop state, so a
reloaded run continues exactly where the saved one stopped.
"""

import json
import struct

import numpy as np

from .corpus import (
    Vocabulary, _instance_from_json, _instance_to_json,
    _unlabeled_from_json, _unlabeled_to_json,
)
from .trainer import TrainConfig, Trainer, build_generator, build_reader

MAGIC = b"GDAN"
VERSION = 1


class CheckpointError(Exception):
    pass


def _pack_arrays(values):
    chunks = [struct.pack("<I", len(values))]
    for name, arr in values.items():
        nb = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            chunks.append(struct.pack("<Q", dim))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def _unpack_arrays(raw):
    out = {}
    off = 0
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = []
        for _ in range(ndim):
            (dim,) = struct.unpack_from("<Q", raw, off)
            off += 8
            shape.append(dim)
        n = int(np.prod(shape)) if shape else 1
        out[name] = np.frombuffer(raw, dtype="<f8", count=n,
                                  offset=off).reshape(shape).copy()
        off += n * 8
    return out


def _json_bytes(obj):
    return json.dumps(obj).encode("utf-8")


def write_sections(path, sections):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        f.write(struct.pack("<I", len(sections)))
        for name, payload in sections.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<Q", len(payload)))
            f.write(payload)


def read_sections(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    off = 4
    (version,) = struct.unpack_from("<H", raw, off)
    off += 2
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    sections = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + nlen].decode("utf-8")
        off += nlen
        (plen,) = struct.unpack_from("<Q", raw, off)
        off += 8
        sections[name] = raw[off:off + plen]
        off += plen
    return sections


def save_checkpoint(path, trainer):
    """Serialize a Trainer so training can continue bit-identically."""
    state = {
        "baseline": trainer.baseline,
        "global_step": trainer.global_step,
        "outer_iter": trainer.outer_iter,
        "best_dev_f1": trainer.best_dev_f1,
        "best_dev_em": trainer.best_dev_em,
        "best_step": trainer.best_step,
        "evals_since_best": trainer.evals_since_best,
        "skipped": trainer.skipped,
        "pretrained": trainer.pretrained,
        "pretrain_losses": trainer.pretrain_losses,
        "trace": trainer.trace,
    }
    rng = {
        "batch": trainer.batch_rng.bit_generator.state,
        "sample": trainer.sample_rng.bit_generator.state,
    }
    sections = {
        "config": _json_bytes(trainer.config.to_json()),
        "vocab": _json_bytes(trainer.vocab.to_json()),
        "reader": trainer.reader.store.to_bytes(),
        "best": _pack_arrays(trainer.best_values),
        "rng": _json_bytes(rng),
        "trainer": _json_bytes(state),
        "u_g": _json_bytes([_instance_to_json(x) for x in trainer.u_g]),
        "unlabeled": _json_bytes([_unlabeled_to_json(x)
                                  for x in trainer.unlabeled]),
    }
    if trainer.generator is not None:
        sections["generator"] = trainer.generator.store.to_bytes()
    write_sections(path, sections)


def load_config(path):
    sections = read_sections(path)
    return TrainConfig.from_json(json.loads(sections["config"]))


def load_vocab(path):
    sections = read_sections(path)
    return Vocabulary.from_json(json.loads(sections["vocab"]))


def load_reader(path, best=True):
    """Rebuild just the reader from a checkpoint; no datasets needed.

    best=True loads the best-dev parameter snapshot (the model a finished
    run reports); best=False loads the parameters the run last trained.
    Returns (config, vocab, reader).
    """
    sections = read_sections(path)
    for required in ("config", "vocab", "reader", "best"):
        if required not in sections:
            raise CheckpointError(f"{path}: missing section {required!r}")
    config = TrainConfig.from_json(json.loads(sections["config"]))
    vocab = Vocabulary.from_json(json.loads(sections["vocab"]))
    reader = build_reader(config, vocab)
    if best:
        reader.store.load_values(_unpack_arrays(sections["best"]))
    else:
        reader.store.load_bytes(sections["reader"])
    return config, vocab, reader


def load_generator(path):
    """Rebuild just the question generator; returns (config, vocab, generator)."""
    sections = read_sections(path)
    for required in ("config", "vocab"):
        if required not in sections:
            raise CheckpointError(f"{path}: missing section {required!r}")
    config = TrainConfig.from_json(json.loads(sections["config"]))
    if "generator" not in sections:
        raise CheckpointError(
            f"{path}: no generator in this checkpoint "
            f"(method {config.method!r} trains none)")
    vocab = Vocabulary.from_json(json.loads(sections["vocab"]))
    generator = build_generator(config, vocab)
    generator.store.load_bytes(sections["generator"])
    return config, vocab, generator


def load_checkpoint(path, labeled, dev):
    """Rebuild a Trainer from a checkpoint plus the original datasets.

    Labeled and dev data are not stored in the file; pass the same sets the
    run started from. The unlabeled pool is stored (the loop indexes into
    it) and restored verbatim.
    """
    sections = read_sections(path)
    for required in ("config", "vocab", "reader", "rng", "trainer"):
        if required not in sections:
            raise CheckpointError(f"{path}: missing section {required!r}")
    config = TrainConfig.from_json(json.loads(sections["config"]))
    vocab = Vocabulary.from_json(json.loads(sections["vocab"]))
    unlabeled = [_unlabeled_from_json(o)
                 for o in json.loads(sections["unlabeled"])]
    trainer = Trainer(config, vocab, labeled, unlabeled, dev)
    trainer.reader.store.load_bytes(sections["reader"])
    if trainer.generator is not None:
        if "generator" not in sections:
            raise CheckpointError(f"{path}: missing generator parameters")
        trainer.generator.store.load_bytes(sections["generator"])
    trainer.best_values = _unpack_arrays(sections["best"])

    rng = json.loads(sections["rng"])
    trainer.batch_rng.bit_generator.state = rng["batch"]
    trainer.sample_rng.bit_generator.state = rng["sample"]

    state = json.loads(sections["trainer"])
    trainer.baseline = state["baseline"]
    trainer.global_step = state["global_step"]
    trainer.outer_iter = state["outer_iter"]
    trainer.best_dev_f1 = state["best_dev_f1"]
    trainer.best_dev_em = state["best_dev_em"]
    trainer.best_step = state["best_step"]
    trainer.evals_since_best = state["evals_since_best"]
    trainer.skipped = state["skipped"]
    trainer.pretrained = state["pretrained"]
    trainer.pretrain_losses = list(state["pretrain_losses"])
    trainer.trace = list(state["trace"])
    trainer.u_g = [_instance_from_json(o) for o in json.loads(sections["u_g"])]
    return trainer
