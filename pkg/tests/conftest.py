import numpy as np
import pytest

from lrprune.nn import LayerSpec, Network, backward, cross_entropy, forward

_VERDICTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    """Record one acceptance line: ``verdict("C3", ok, "detail")``."""

    def record(name, ok, detail=""):
        _VERDICTS[name] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_VERDICTS, key=lambda s: int(s[1:])):
        ok, detail = _VERDICTS[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")


def dense_net(weights, biases=None):
    """Network from explicit (fan_in, fan_out) matrices with ReLU between them."""
    weights = [np.asarray(w, dtype=np.float64) for w in weights]
    if biases is None:
        biases = [np.zeros(w.shape[1]) for w in weights]
    layers = []
    for d, w in enumerate(weights):
        layers.append(LayerSpec("dense", w.shape[0], w.shape[1]))
        if d < len(weights) - 1:
            layers.append(LayerSpec("relu", w.shape[1], w.shape[1]))
    unit_ids = [np.arange(w.shape[1]) for w in weights[:-1]]
    return Network(layers, weights, [np.asarray(b, dtype=np.float64) for b in biases], unit_ids)


def random_net(rng, widths, scale=1.0, bias_scale=0.1):
    ws = [rng.normal(0, scale / np.sqrt(a), (a, b)) for a, b in zip(widths[:-1], widths[1:])]
    bs = [rng.normal(0, bias_scale, b) for b in widths[1:]]
    return dense_net(ws, bs)


def summed_loss(net, x, y):
    logits, _ = forward(net, x)
    return float(cross_entropy(logits, y).sum())


def fd_check(net, x, y, h=1e-5):
    """Largest relative gap between analytic and central-difference gradients."""
    _, trace = forward(net, x)
    g = backward(net, trace, y)
    worst = 0.0
    for params, grads in ((net.weights, g.d_weights), (net.biases, g.d_biases)):
        for p, gp in zip(params, grads):
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = p[idx]
                p[idx] = old + h
                up = summed_loss(net, x, y)
                p[idx] = old - h
                down = summed_loss(net, x, y)
                p[idx] = old
                num = (up - down) / (2 * h)
                worst = max(worst, abs(num - gp[idx]) / max(abs(num), abs(gp[idx]), 1e-6))
    return worst
