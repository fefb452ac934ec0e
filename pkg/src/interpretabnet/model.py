"""The InterpreTabNet network.

An encoder of sequential decision steps (feature transformer + MLP-attentive
mask), a reconstruction decoder used for self-supervised pretraining, and a
softmax classification head. Attention masks collected during the forward
pass give per-feature importance scores.
"""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numeric as nx
from .errors import ConfigError, DegenerateImportanceError, ShapeError
from .layers import WLU, Activation, GhostBatchNorm, GLUBlock, Linear, Module
from .numeric import Tensor

RESIDUAL_SCALE = math.sqrt(0.5)


@dataclass
class ArchConfig:
    n_steps: int = 3
    n_d: int = 8
    n_a: int = 8
    n_shared: int = 2
    n_independent: int = 2
    gamma_prior: float = 1.3
    entmax_alpha: float = 1.5
    virtual_batch_size: int = 128
    sparsity_coeff: float = 0.0
    # step activation: "wlu" or one of relu/elu/prelu/silu (ablations)
    activation: str = "wlu"
    wlu_weights: tuple = (0.6, 0.2, 0.2)
    attentive_mlp: bool = True
    attention_hidden: int = 0  # 0 means n_features
    n_shared_decoder: int = 1
    n_independent_decoder: int = 1
    gbn_momentum: float = 0.9

    def __post_init__(self):
        self.wlu_weights = tuple(float(w) for w in self.wlu_weights)
        if self.n_steps < 1 or self.n_d < 1 or self.n_a < 1:
            raise ConfigError("n_steps, n_d and n_a must all be >= 1")
        if self.n_shared < 0 or self.n_independent < 0 or self.n_shared + self.n_independent < 1:
            raise ConfigError("feature transformer needs at least one GLU block")
        if self.n_shared_decoder + self.n_independent_decoder < 1:
            raise ConfigError("decoder transformer needs at least one GLU block")
        if self.gamma_prior < 1.0:
            raise ConfigError(f"gamma_prior must be >= 1, got {self.gamma_prior}")
        if not (1.0 < self.entmax_alpha <= 2.0):
            raise ConfigError(f"entmax_alpha must lie in (1, 2], got {self.entmax_alpha}")
        if self.sparsity_coeff < 0:
            raise ConfigError("sparsity_coeff must be >= 0")
        if self.virtual_batch_size < 1:
            raise ConfigError("virtual_batch_size must be >= 1")
        if len(self.wlu_weights) != 3:
            raise ConfigError("wlu_weights needs three values (ELU, PReLU, SiLU)")

    @classmethod
    def tabnet(cls, **overrides):
        """Original TabNet settings: ReLU steps, plain attentive FC, sparsemax."""
        base = dict(activation="relu", attentive_mlp=False, entmax_alpha=2.0)
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        d = asdict(self)
        d["wlu_weights"] = list(self.wlu_weights)
        return d


@dataclass
class MaskSet:
    masks: list
    priors: list

    def __len__(self):
        return len(self.masks)


@dataclass
class ImportanceVector:
    scores: np.ndarray
    model_id: str = ""
    subset_id: str = ""
    raw_total: float = 0.0
    feature_names: list = field(default_factory=list)

    def to_dict(self):
        return {
            "scores": [float(s) for s in self.scores],
            "model_id": self.model_id,
            "subset_id": self.subset_id,
            "raw_total": float(self.raw_total),
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["scores"], dtype=np.float64), d.get("model_id", ""),
                   d.get("subset_id", ""), float(d.get("raw_total", 0.0)),
                   list(d.get("feature_names", [])))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def normalize_importance(raw, **meta):
    raw = np.asarray(raw, dtype=np.float64).ravel()
    total = float(raw.sum())
    if not np.all(raw >= 0) or total <= 0:
        raise DegenerateImportanceError("importance mass is zero; cannot normalise")
    return ImportanceVector(raw / total, raw_total=total, **meta)


def feature_importance(masks, **meta):
    """Sum every mask value over decision steps and samples, then normalise.

    ``masks`` is a :class:`MaskSet` or a sequence of (samples x features)
    arrays, one per step.
    """
    arrays = masks.masks if isinstance(masks, MaskSet) else masks
    arrays = [m.data if isinstance(m, Tensor) else np.asarray(m, dtype=np.float64) for m in arrays]
    if not arrays or arrays[0].shape[0] < 1:
        raise DegenerateImportanceError("feature importance needs at least one sample")
    raw = np.zeros(arrays[0].shape[1])
    for m in arrays:
        raw += m.sum(axis=0)
    return normalize_importance(raw, **meta)


class StepBlocks(Module):
    def __init__(self, blocks):
        self.blocks = blocks


class AttentiveTransformer(Module):
    """FC -> [FC -> ReLU -> FC -> ReLU] -> GBN, scaled by the prior, then entmax."""

    def __init__(self, n_a, n_features, config, rng):
        hidden = config.attention_hidden or n_features
        self.use_mlp = config.attentive_mlp
        # straight into GBN without the MLP, so a bias would be cancelled
        self.fc = Linear(n_a, n_features, rng, bias=self.use_mlp)
        if self.use_mlp:
            self.mlp1 = Linear(n_features, hidden, rng)
            self.mlp2 = Linear(hidden, n_features, rng)
        self.bn = GhostBatchNorm(n_features, config.virtual_batch_size, config.gbn_momentum)
        self.alpha = config.entmax_alpha

    def __call__(self, a, prior):
        z = self.fc(a)
        if self.use_mlp:
            z = nx.relu(self.mlp2(nx.relu(self.mlp1(z))))
        z = self.bn(z) * prior
        # a zero prior means the feature's budget is spent: exclude it outright
        return nx.entmax_rows(z, self.alpha, exclude=prior.data == 0)


def _make_activation(config):
    if config.activation == "wlu":
        return WLU(config.wlu_weights)
    return Activation(config.activation)


class InterpreTabNet(Module):
    """Encoder, decoder and classification head sharing one parameter set."""

    def __init__(self, n_features, n_classes, config=None, seed=0):
        config = config or ArchConfig()
        if n_features < 1 or n_classes < 2:
            raise ConfigError("need at least one feature and two classes")
        self.config = config
        self.n_features = n_features
        self.n_classes = n_classes
        self.seed = seed
        rng = np.random.default_rng(seed)
        c = config
        width = c.n_d + c.n_a
        vbs, mom = c.virtual_batch_size, c.gbn_momentum

        self.input_bn = GhostBatchNorm(n_features, None, mom)
        self.shared = [GLUBlock(n_features if i == 0 else width, width, rng, vbs, mom)
                       for i in range(c.n_shared)]
        first_in = n_features if c.n_shared == 0 else width
        # index 0 is the initial splitter, 1..n_steps the decision steps
        self.specific = [
            StepBlocks([GLUBlock(first_in if i == 0 else width, width, rng, vbs, mom)
                        for i in range(c.n_independent)])
            for _ in range(c.n_steps + 1)
        ]
        self.attentive = [AttentiveTransformer(c.n_a, n_features, c, rng) for _ in range(c.n_steps)]
        self.activations = [_make_activation(c) for _ in range(c.n_steps)]
        self.head = Linear(c.n_d, n_classes, rng)

        self.dec_shared = [GLUBlock(c.n_d, c.n_d, rng, vbs, mom) for _ in range(c.n_shared_decoder)]
        self.dec_specific = [
            StepBlocks([GLUBlock(c.n_d, c.n_d, rng, vbs, mom) for _ in range(c.n_independent_decoder)])
            for _ in range(c.n_steps)
        ]
        self.dec_fc = [Linear(c.n_d, n_features, rng) for _ in range(c.n_steps)]

        for name, p in self.named_parameters():
            p.name = name

    # -- structure -----------------------------------------------------------

    def set_virtual_batch_size(self, size):
        for m in self.modules():
            if isinstance(m, GhostBatchNorm) and m is not self.input_bn:
                m.virtual_batch_size = size

    def encoder_parameters(self):
        return [p for n, p in self.named_parameters()
                if not n.startswith(("head.", "dec_"))]

    def _run_blocks(self, x, blocks):
        h = x
        for i, block in enumerate(blocks):
            h = block(h) if i == 0 else (h + block(h)) * RESIDUAL_SCALE
        return h

    def feature_transformer(self, x, step=None):
        """Shared blocks then the step's own blocks; ``step=None`` is the initial splitter."""
        if step is None:
            index = 0
        else:
            if not (0 <= step < self.config.n_steps):
                raise IndexError(f"step {step} out of range for n_steps={self.config.n_steps}")
            index = step + 1
        return self._run_blocks(nx.as_tensor(x), self.shared + self.specific[index].blocks)

    # -- forward passes ------------------------------------------------------

    def _check_input(self, x):
        x = nx.as_tensor(x)
        if x.cols != self.n_features:
            raise ShapeError(f"expected {self.n_features} feature columns, got {x.cols}")
        return x

    def encoder_forward(self, x, mode=None):
        """Return (decision_out, MaskSet, per-step outputs)."""
        if mode is not None:
            self.train(mode == "train")
        c = self.config
        x = self.input_bn(self._check_input(x))
        prior = Tensor(np.ones((x.rows, self.n_features)))
        a = self.feature_transformer(x)[c.n_d:]
        decision = None
        masks, priors, steps = [], [], []
        for t in range(c.n_steps):
            mask = self.attentive[t](a, prior)
            masks.append(mask)
            priors.append(prior)
            prior = prior * (c.gamma_prior - mask)
            h = self.feature_transformer(mask * x, t)
            d = self.activations[t](h[:c.n_d])
            a = h[c.n_d:]
            steps.append(d)
            decision = d if decision is None else decision + d
        return decision, MaskSet(masks, priors), steps

    def decoder_forward(self, embedding):
        """Sum over decoding steps of FC(feature transformer(step embedding)).

        ``embedding`` is the list of per-step encoder outputs, or one tensor
        that is fed to every decoding step.
        """
        steps = embedding if isinstance(embedding, (list, tuple)) else [embedding] * self.config.n_steps
        recon = None
        for t, e in enumerate(steps):
            h = self._run_blocks(nx.as_tensor(e), self.dec_shared + self.dec_specific[t].blocks)
            out = self.dec_fc[t](h)
            recon = out if recon is None else recon + out
        return recon

    def mask_entropy(self, maskset):
        total = None
        for m in maskset.masks:
            ent = (m * nx.log(m + 1e-15)).sum() * (-1.0 / m.rows)
            total = ent if total is None else total + ent
        return total * (1.0 / len(maskset.masks))

    def logits(self, x, mode=None):
        decision, masks, _ = self.encoder_forward(x, mode)
        return self.head(decision), masks

    def predict_proba(self, x, batch_size=4096):
        """Class probabilities in eval mode (running statistics only)."""
        self.eval()
        x = np.asarray(x, dtype=np.float64)
        out = []
        for lo in range(0, x.shape[0], batch_size):
            logits, _ = self.logits(x[lo:lo + batch_size])
            out.append(nx.softmax_rows(logits).data)
        return np.concatenate(out, axis=0)

    def predict(self, x):
        return self.predict_proba(x).argmax(axis=1)

    def explain(self, x, batch_size=4096):
        """Eval-mode masks for ``x`` as a list of (samples x features) arrays."""
        self.eval()
        x = np.asarray(x, dtype=np.float64)
        per_step = [[] for _ in range(self.config.n_steps)]
        for lo in range(0, x.shape[0], batch_size):
            _, maskset, _ = self.encoder_forward(x[lo:lo + batch_size])
            for t, m in enumerate(maskset.masks):
                per_step[t].append(m.data)
        return [np.concatenate(parts, axis=0) for parts in per_step]

    def importance(self, x, model_id="", subset_id="", feature_names=()):
        return feature_importance(self.explain(x), model_id=model_id, subset_id=subset_id,
                                  feature_names=list(feature_names))

    # -- state ---------------------------------------------------------------

    def state_arrays(self):
        """All parameters and buffers by name (copies)."""
        state = {n: p.data.copy() for n, p in self.named_parameters()}
        for n, b in self.named_buffers():
            state[n] = b.copy()
        return state

    def load_state_arrays(self, state, strict=True):
        params = dict(self.named_parameters())
        buffers = {}
        for m_name, m in self._buffer_owners():
            for b in m.buffer_names:
                buffers[m_name + b] = (m, b)
        missing = (set(params) | set(buffers)) - set(state)
        if strict and missing:
            raise KeyError(f"state is missing entries: {sorted(missing)[:5]}")
        for name, arr in state.items():
            if name in params:
                if params[name].shape != arr.shape:
                    raise ShapeError(f"{name}: expected shape {params[name].shape}, got {arr.shape}")
                params[name].data = np.array(arr, dtype=np.float64)
                params[name].grad = np.zeros_like(params[name].data)
            elif name in buffers:
                m, b = buffers[name]
                setattr(m, b, np.array(arr, dtype=np.float64))
            elif strict:
                raise KeyError(f"unexpected state entry {name!r}")

    def _buffer_owners(self, module=None, prefix=""):
        module = module or self
        if module.buffer_names:
            yield prefix, module
        for name, value in vars(module).items():
            if isinstance(value, Module):
                yield from self._buffer_owners(value, f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from self._buffer_owners(item, f"{prefix}{name}.{i}.")
