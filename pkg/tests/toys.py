"""Small seeded models and losses shared by the unit and acceptance tests."""
import numpy as np

from interpretabnet import numeric as nx, simplex
from interpretabnet.layers import WLU, GhostBatchNorm, GLUBlock, Linear
from interpretabnet.model import ArchConfig, InterpreTabNet
from interpretabnet.numeric import Parameter, Tensor
from interpretabnet.training import classification_loss

# rounding noise of a central difference on an O(1) loss, see gradient_check
STRUCTURAL_ZERO_ATOL = 1e-9

LAYER_KINDS = ("wlu", "glu", "gbn", "linear", "softmax", "sparsemax", "entmax", "entmax13")


def toy_gradient_problem(seed, rows=8):
    """2-feature, n_d = n_a = 2, 2-step model with randomised parameters.

    Every parameter is perturbed so biases are not sitting exactly on a
    ReLU kink, as they would at initialisation. Returns (loss_fn, params).
    """
    rng = np.random.default_rng(seed)
    cfg = ArchConfig(n_steps=2, n_d=2, n_a=2, n_shared=1, n_independent=1, virtual_batch_size=rows)
    model = InterpreTabNet(2, 2, cfg, seed=seed)
    for _, p in model.named_parameters():
        p.data = p.data + rng.normal(scale=0.3, size=p.shape)
    x = rng.normal(size=(rows, 2))
    y = rng.integers(0, 2, size=rows)
    y[:2] = [0, 1]
    model.train()
    params = model.encoder_parameters() + model.head.parameters()
    return (lambda: classification_loss(model, x, y)), params


def _inputs(rng, rows, cols):
    return Tensor(rng.normal(size=(rows, cols)))


def _away_from_ties(z, gap=1e-3):
    """True when no two logits nearly tie and no output sits near the support edge."""
    srt = np.sort(z, axis=1)
    edge = [simplex.entmax(z, a) for a in (1.3, 1.5, 2.0)]
    return np.all(np.diff(srt, axis=1) > gap) and all(np.all((p == 0) | (p > gap)) for p in edge)


def layer_gradient_error(kind, seed):
    """Worst relative gradient error of one seeded layer problem."""
    rng = np.random.default_rng(seed)
    if kind == "wlu":
        act = WLU(weights=tuple(rng.uniform(-1, 1, 3)), prelu_slope=rng.uniform(0, 0.5))
        x = Parameter(rng.normal(size=(3, 4)))
        x.data[np.abs(x.data) < 1e-3] += 1e-2  # stay off the kink
        target = Tensor(rng.normal(size=(3, 4)))
        return nx.gradient_check(lambda: nx.tsum(act(x) * target), [x] + act.parameters())
    if kind == "glu":
        # ghost chunks of 3 rows: with 2 rows the normalised output is nearly
        # constant (+-1) and the weight gradients are pure rounding noise
        block = GLUBlock(3, 2, rng, virtual_batch_size=3)
        x = _inputs(rng, 6, 3)
        target = Tensor(rng.normal(size=(6, 2)))
        return nx.gradient_check(lambda: nx.tsum(block(x) * target), block.parameters())
    if kind == "gbn":
        # 9 rows give three chunks of 3; a 2-row chunk normalises to +-1 almost
        # regardless of x, leaving only rounding noise in the x gradient
        bn = GhostBatchNorm(3, virtual_batch_size=3)
        bn.scale.data = rng.uniform(0.5, 2, size=(1, 3))
        x = Parameter(rng.normal(size=(9, 3)))
        target = Tensor(rng.normal(size=(9, 3)))
        return nx.gradient_check(lambda: nx.tsum(bn(x) * target), [x] + bn.parameters())
    if kind == "linear":
        lin = Linear(4, 3, rng)
        lin.b.data = rng.normal(size=(3, 1))
        x = Parameter(rng.normal(size=(5, 4)))
        target = Tensor(rng.normal(size=(5, 3)))
        return nx.gradient_check(lambda: nx.tsum(nx.square(lin(x) - target)), [x] + lin.parameters())
    z = Parameter(rng.normal(size=(3, 5)) * 2)
    while not _away_from_ties(z.data):
        z.data = rng.normal(size=(3, 5)) * 2
    target = Tensor(rng.normal(size=(3, 5)))
    fn = {"softmax": nx.softmax_rows, "sparsemax": nx.sparsemax_rows,
          "entmax": lambda a: nx.entmax_rows(a, 1.5), "entmax13": lambda a: nx.entmax_rows(a, 1.3)}[kind]
    return nx.gradient_check(lambda: nx.tsum(fn(z) * target), [z])
