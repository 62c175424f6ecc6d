"""Scikit-learn style wrapper: fit on (incorrect, correct) sentence lists,
predict corrected sentences, score with F0.5.

Everything heavy (vocabulary training, the transformer, beam search) lives
in the dedicated modules; this class only wires them behind the familiar
fit/predict/score surface so the corrector drops into sklearn tooling
(grid-search folds, pipelines) without adapters.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from sklearn.base import BaseEstimator

from .corpus import make_pair
from .decoding import BeamConfig, IterativeDecodeConfig, iterative_decode, make_decode_fn
from .evaluation import score_sentences
from .model import ModelConfig, TransformerModel
from .subword import SubwordVocab, train_vocab, filter_by_length
from .tokenizer import tokenize
from .training import (TrainConfig, config_fingerprint, encode_corpus, load_checkpoint,
                       load_params, params_of, save_checkpoint, train_loop)
from .validation import check_positive_int, check_probability, check_text_list


class TransformerCorrector(BaseEstimator):
    """Sentence corrector with the estimator interface.

    fit(X, y) trains a subword vocabulary and a seq2seq model on parallel
    sentence lists; predict(X) runs iterative beam decoding. transform is an
    alias for predict so the object also slots into transformer pipelines.
    """

    def __init__(
        self,
        preset: str = "desk",
        vocab_size: int = 1000,
        steps: int = 500,
        peak_lr: float = 3e-4,
        warmup_steps: int = 100,
        schedule: str = "rsqrt",
        batch_tokens: int = 2000,
        mle_weight: float = 3.0,
        p_src: float = 0.2,
        p_tgt: float = 0.1,
        internal_dropout: float = 0.1,
        max_pieces: int = 150,
        beam_size: int = 4,
        alpha: float = 0.6,
        threshold: float = 1.0,
        max_iters: int = 1,
        seed: int = 0,
    ):
        self.preset = preset
        self.vocab_size = vocab_size
        self.steps = steps
        self.peak_lr = peak_lr
        self.warmup_steps = warmup_steps
        self.schedule = schedule
        self.batch_tokens = batch_tokens
        self.mle_weight = mle_weight
        self.p_src = p_src
        self.p_tgt = p_tgt
        self.internal_dropout = internal_dropout
        self.max_pieces = max_pieces
        self.beam_size = beam_size
        self.alpha = alpha
        self.threshold = threshold
        self.max_iters = max_iters
        self.seed = seed

    # --- fitting ---

    def _model_config(self, vocab: SubwordVocab) -> ModelConfig:
        return ModelConfig.preset(
            self.preset,
            vocab_size=len(vocab),
            internal_dropout=check_probability("internal_dropout", self.internal_dropout, allow_one=False),
            p_src=check_probability("p_src", self.p_src, allow_one=False),
            p_tgt=check_probability("p_tgt", self.p_tgt, allow_one=False),
            mle_weight=float(self.mle_weight),
        )

    def fit(self, X, y, dev_X=None, dev_y=None):
        X = check_text_list("X", X)
        y = check_text_list("y", y)
        if len(X) != len(y):
            raise ValueError(f"X and y lengths differ: {len(X)} vs {len(y)}")
        check_positive_int("steps", self.steps, minimum=1)
        check_positive_int("vocab_size", self.vocab_size, minimum=270)

        pairs = [make_pair(s, t, "fit") for s, t in zip(X, y)]
        if dev_X is None:
            dev_pairs = pairs[: max(1, len(pairs) // 20)]
        else:
            dev_X = check_text_list("dev_X", dev_X)
            dev_y = check_text_list("dev_y", dev_y)
            dev_pairs = [make_pair(s, t, "fit") for s, t in zip(dev_X, dev_y)]

        self.vocab_ = train_vocab(X + y, target_size=self.vocab_size)
        model_cfg = self._model_config(self.vocab_)
        train_cfg = TrainConfig(
            steps=self.steps, peak_lr=self.peak_lr, warmup_steps=self.warmup_steps,
            schedule=self.schedule, batch_tokens=self.batch_tokens,
            checkpoint_every=0, seed=self.seed,
        )
        pairs = filter_by_length(pairs, self.vocab_, self.max_pieces)
        if not pairs:
            raise ValueError("no training pairs survive the length filter")
        examples = encode_corpus(pairs, self.vocab_, model_cfg.mle_weight)
        with tempfile.TemporaryDirectory() as tmp:
            out = train_loop(examples, dev_pairs, self.vocab_, model_cfg, train_cfg,
                             tmp, log_f05=False)
        self.model_ = out["model"].eval()
        self.model_config_ = model_cfg
        self.train_metrics_ = out["metrics"]
        return self

    # --- inference ---

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")

    def predict(self, X) -> list[str]:
        self._check_fitted()
        X = check_text_list("X", X)
        beam_cfg = BeamConfig(beam_size=self.beam_size, alpha=self.alpha)
        iter_cfg = IterativeDecodeConfig(threshold=self.threshold, max_iters=self.max_iters)
        decode = make_decode_fn(self.model_, self.vocab_, beam_cfg, cache={})
        return [iterative_decode(x, decode, iter_cfg) for x in X]

    def transform(self, X) -> list[str]:
        return self.predict(X)

    def score(self, X, y) -> float:
        """Micro F0.5 of predicted corrections against references."""
        y = check_text_list("y", y)
        preds = self.predict(X)
        rows = [
            (tuple(tokenize(s)), tuple(tokenize(h)), tuple(tokenize(r)))
            for s, h, r in zip(X, preds, y)
        ]
        return score_sentences(rows).f05

    # --- persistence ---

    def save(self, out_dir: str | Path) -> None:
        self._check_fitted()
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.vocab_.save(out_dir / "vocab.txt")
        save_checkpoint(out_dir / "model.ckpt", params_of(self.model_), self.steps,
                        config_fingerprint(self.model_config_), self.model_config_.to_dict())
        (out_dir / "estimator.json").write_text(
            json.dumps(self.get_params(), sort_keys=True, indent=2), encoding="utf-8"
        )

    @classmethod
    def load(cls, out_dir: str | Path) -> "TransformerCorrector":
        out_dir = Path(out_dir)
        params = json.loads((out_dir / "estimator.json").read_text(encoding="utf-8"))
        est = cls(**params)
        est.vocab_ = SubwordVocab.load(out_dir / "vocab.txt")
        ckpt = load_checkpoint(out_dir / "model.ckpt")
        cfg = ModelConfig(**ckpt.model_config)
        model = TransformerModel(cfg)
        load_params(model, ckpt.params)
        est.model_ = model.eval()
        est.model_config_ = cfg
        return est
