"""Small shared builders for the test suite."""
import numpy as np

from precm import autodiff as ad
from precm.layers import LayerConfig, NetConfig, appendix_e_config, build_net, forward


def small_net(flavor="precm", dtype="f64", seed=0, c=2, kernel=(3, 3)):
    return build_net(appendix_e_config(block_channels=c, kernel=kernel, flavor=flavor, seed=seed, dtype=dtype))


def mixed_net(dtype="f64", seed=0):
    """Every layer type, with a strided and a dilated convolution and a final sigmoid."""
    cfg = NetConfig(
        layers=[
            LayerConfig("precm1", kernel=(3, 2), channels=2, stride=(2, 2)),
            LayerConfig("relu"),
            LayerConfig("precm2", kernel=(3, 3), channels=2, dilation=(2, 2)),
            LayerConfig("sigmoid"),
            LayerConfig("precm2", kernel=(1, 1), channels=3),
            LayerConfig("relu"),
            LayerConfig("precm3", kernel=(2, 2), channels=1),
            LayerConfig("sigmoid"),
        ],
        dtype=dtype,
        seed=seed,
    )
    net = build_net(cfg)
    rng = np.random.default_rng(seed + 1)
    for k, v in net.params.items():
        if k.endswith(".bias"):
            net.params[k] = rng.normal(0, 0.1, v.shape).astype(v.dtype)
    return net


def loss_grads(net, x, y):
    """Mean-BCE loss of sigmoid(net(x)) and its parameter gradients."""
    tape = ad.Tape()
    P = {k: tape.var(v) for k, v in net.params.items()}
    out = forward(net, x, P)
    if net.config.layers[-1].type != "sigmoid":
        out = ad.sigmoid(out)
    loss = ad.bce_loss(out, y)
    g = ad.backward(tape, loss)
    return float(loss.value), {k: ad.grad_of(g, v) for k, v in P.items()}


def loss_only(net, params, x, y):
    out = forward(net, x, params)
    if net.config.layers[-1].type != "sigmoid":
        out = ad.sigmoid(out)
    return float(ad.bce_loss(out, y))
