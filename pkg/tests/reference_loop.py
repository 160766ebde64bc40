"""MLM+NSP-only training loop with the constraints module made unimportable.

Usage: python3 reference_loop.py VOCAB CORPUS STEPS SEED OUT.npz [k max_len lr warmup]
"""

import sys

sys.modules["lexbert.constraints"] = None  # any import of it now raises ImportError

import numpy as np  # noqa: E402

from lexbert import tensor as T  # noqa: E402
from lexbert.model import Model, ModelConfig  # noqa: E402
from lexbert.optim import AdamState, adam_step, lr_at  # noqa: E402
from lexbert.pretraining_data import PretrainingStream, load_corpus  # noqa: E402
from lexbert.tokenizer import load_vocab  # noqa: E402


class _Schedule:
    def __init__(self, base_lr, warmup_steps):
        self.base_lr = base_lr
        self.warmup_steps = warmup_steps


def main(argv):
    vocab_path, corpus_path, steps, seed, out = argv[:5]
    k, max_len, lr, warmup = (int(argv[5]), int(argv[6]), float(argv[7]), int(argv[8])) if len(argv) > 5 else (
        4, 24, 1e-3, 10)
    steps, seed = int(steps), int(seed)
    try:
        import lexbert.constraints  # noqa: F401
    except ImportError:
        pass
    else:
        raise SystemExit("constraints module unexpectedly importable")
    vocab = load_vocab(vocab_path)
    docs = load_corpus(corpus_path, vocab)
    cfg = ModelConfig(vocab_size=len(vocab), hidden=16, layers=1, heads=2, max_positions=max_len)
    model = Model(cfg, seed=[seed, 0])
    stream = PretrainingStream(docs, vocab, max_len, seed)
    opt = AdamState(base_lr=lr)
    dropout_rng = np.random.default_rng([seed, 4])
    schedule = _Schedule(lr, warmup)
    for n in range(1, steps + 1):
        batch = stream.next_batch(k)
        loss, _, _ = model.mlm_nsp_loss(batch, training=True, rng=dropout_rng)
        group = model.group("mlm_nsp")
        adam_step(opt, group, T.backward(loss, group), lr_at(n, schedule))
    np.savez(out, **model.state_dict())


if __name__ == "__main__":
    main(sys.argv[1:])
