"""PreCM lifting, group and projection layers and the networks built from them.

Orientation features keep their four orientation blocks stacked orientation-major
in the channel axis: channels ``[i*c, (i+1)*c)`` hold block ``i``.

All ops go through :mod:`precm.autodiff`, so the same forward code runs on
plain arrays or on taped variables.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import value
from .padplan import ConvSpec, PlanError, derive_base_padding
from .tensor import load_prt1, save_prt1

CONV_TYPES = ("precm1", "precm2", "precm3")
POINTWISE_TYPES = ("relu", "sigmoid")
FLAVORS = ("precm", "baseline")


class ConfigError(ValueError):
    pass


@dataclass
class OrientedFeature:
    base: object  # (B, 4 * block_channels, H, W) array or Var
    block_channels: int

    def __post_init__(self):
        if value(self.base).shape[1] != 4 * self.block_channels:
            raise ValueError(
                f"expected {4 * self.block_channels} channels for 4 blocks of {self.block_channels}, "
                f"got {value(self.base).shape[1]}"
            )

    def block(self, i: int):
        c = self.block_channels
        if isinstance(self.base, ad.Var):
            return ad.channel_slice(self.base, i * c, (i + 1) * c)
        return self.base[:, i * c : (i + 1) * c]


def layer_spec(x, kernel, stride=(1, 1), dilation=(1, 1)) -> ConvSpec:
    """Square-map plan for a PreCM layer applied to ``x``.

    Orientation blocks stack in one tensor, so every mode must yield the same
    (H, W): the input and the output must both be square.
    """
    _, _, h, w = value(x).shape
    if h != w:
        raise PlanError(f"PreCM layers need square inputs, got {w}x{h}")
    spec = ConvSpec(kernel=kernel, input=(w, h), stride=stride, dilation=dilation)
    if spec.output[0] != spec.output[1]:
        raise PlanError(
            f"non-square output {spec.output[0]}x{spec.output[1]} cannot stack orientation blocks; "
            "use equal strides and dilations or an explicit square output"
        )
    derive_base_padding(spec)
    return spec


def precm1_forward(x, phi1, spec: ConvSpec, bias=None) -> OrientedFeature:
    """Lift a plain map to four orientation blocks; block i uses the kernel rotated by i."""
    blocks = [ad.conv_sigma(x, ad.rotate_kernel(i, phi1), spec, i) for i in range(4)]
    out = ad.concat_channels(blocks)
    if bias is not None:
        out = ad.add_bias(out, bias, blocks=4)
    return OrientedFeature(out, value(phi1).shape[0])


def precm2_forward(f: OrientedFeature, phi2, spec: ConvSpec, bias=None) -> OrientedFeature:
    """Group layer. ``phi2`` has shape (4, out, in, h, w), indexed by relative orientation.

    Output block j sums, over input blocks i, the mode-j convolution of block i with
    ``phi2[(i - j) % 4]`` rotated by j. The sum over i is folded into the
    convolution's own canonical accumulation.
    """
    if value(phi2).shape[2] != f.block_channels:
        raise ValueError(f"phi2 expects {value(phi2).shape[2]} input channels per block, got {f.block_channels}")
    blocks = [ad.conv_sigma(f.base, ad.rotate_kernel(j, ad.cyclic_kernel(phi2, j)), spec, j) for j in range(4)]
    out = ad.concat_channels(blocks)
    if bias is not None:
        out = ad.add_bias(out, bias, blocks=4)
    return OrientedFeature(out, value(phi2).shape[1])


def precm3_forward(f: OrientedFeature, phi3, spec: ConvSpec, bias=None):
    """Project orientation blocks back to a plain map: sum_j conv_j(block_j, rot_j phi3)."""
    terms = [ad.conv_sigma(f.block(j), ad.rotate_kernel(j, phi3), spec, j) for j in range(4)]
    out = ad.add_n(terms)
    if bias is not None:
        out = ad.add_bias(out, bias)
    return out


# ---- network assembly -----------------------------------------------------------


@dataclass
class LayerConfig:
    type: str
    kernel: tuple[int, int] = (3, 3)
    channels: int | None = None
    stride: tuple[int, int] = (1, 1)
    dilation: tuple[int, int] = (1, 1)
    bias: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "LayerConfig":
        if not isinstance(d, dict) or "type" not in d:
            raise ConfigError(f"layer entry must be an object with a 'type': {d!r}")
        unknown = set(d) - {"type", "kernel", "channels", "stride", "dilation", "bias"}
        if unknown:
            raise ConfigError(f"unknown layer keys {sorted(unknown)}")
        kw = dict(d)
        for key in ("kernel", "stride", "dilation"):
            if key in kw:
                v = kw[key]
                kw[key] = (v, v) if isinstance(v, int) else tuple(v)
        return cls(**kw)


@dataclass
class NetConfig:
    layers: list[LayerConfig]
    in_channels: int = 1
    flavor: str = "precm"
    seed: int = 0
    dtype: str = "f32"

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        if not isinstance(d, dict) or "layers" not in d:
            raise ConfigError("network config needs a 'layers' list")
        unknown = set(d) - {"layers", "in_channels", "flavor", "seed", "dtype"}
        if unknown:
            raise ConfigError(f"unknown network keys {sorted(unknown)}")
        kw = dict(d)
        kw["layers"] = [LayerConfig.from_dict(x) for x in d["layers"]]
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        for layer in d["layers"]:
            for key in ("kernel", "stride", "dilation"):
                layer[key] = list(layer[key])
        return d

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "f64" else np.float32


def appendix_e_config(block_channels: int = 4, in_channels: int = 1, out_channels: int = 1,
                      kernel=(3, 3), flavor: str = "precm", seed: int = 0, dtype: str = "f32") -> NetConfig:
    """Three-layer demonstration net: PreCM1 -> ReLU -> PreCM2 -> ReLU -> PreCM3."""
    return NetConfig(
        layers=[
            LayerConfig("precm1", kernel=kernel, channels=block_channels),
            LayerConfig("relu"),
            LayerConfig("precm2", kernel=kernel, channels=block_channels),
            LayerConfig("relu"),
            LayerConfig("precm3", kernel=kernel, channels=out_channels),
        ],
        in_channels=in_channels,
        flavor=flavor,
        seed=seed,
        dtype=dtype,
    )


def validate_config(cfg: NetConfig) -> None:
    if cfg.flavor not in FLAVORS:
        raise ConfigError(f"flavor must be one of {FLAVORS}, got {cfg.flavor!r}")
    if cfg.dtype not in ("f32", "f64"):
        raise ConfigError(f"dtype must be 'f32' or 'f64', got {cfg.dtype!r}")
    if cfg.in_channels < 1:
        raise ConfigError("in_channels must be >= 1")
    convs = [layer for layer in cfg.layers if layer.type in CONV_TYPES]
    for layer in cfg.layers:
        if layer.type not in CONV_TYPES + POINTWISE_TYPES:
            raise ConfigError(f"unknown layer type {layer.type!r}")
        if layer.type in CONV_TYPES:
            if not layer.channels or layer.channels < 1:
                raise ConfigError(f"{layer.type} layer needs a positive 'channels'")
            if min(layer.kernel + layer.stride + layer.dilation) < 1:
                raise ConfigError(f"{layer.type} layer has a non-positive size")
    if len(convs) < 2:
        raise ConfigError("need at least a precm1 and a precm3 layer")
    if convs[0].type != "precm1":
        raise ConfigError("the first convolution must be precm1")
    if convs[-1].type != "precm3":
        raise ConfigError("the last convolution must be precm3")
    for layer in convs[1:-1]:
        if layer.type != "precm2":
            raise ConfigError("every intermediate convolution must be precm2")


def _width(layer: LayerConfig, flavor: str) -> int:
    # baseline hidden layers get twice the block width: same parameter count for precm2
    if flavor == "baseline" and layer.type != "precm3":
        return 2 * layer.channels
    return layer.channels


def param_shapes(cfg: NetConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    cin = cfg.in_channels
    for i, layer in enumerate(cfg.layers):
        if layer.type not in CONV_TYPES:
            continue
        kw, kh = layer.kernel
        cout = _width(layer, cfg.flavor)
        if cfg.flavor == "precm" and layer.type == "precm2":
            shapes[f"L{i}.weight"] = (4, cout, cin, kh, kw)
        else:
            shapes[f"L{i}.weight"] = (cout, cin, kh, kw)
        if layer.bias:
            shapes[f"L{i}.bias"] = (cout,)
        cin = cout
    return shapes


def param_count(cfg: NetConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(cfg).values())


def _fan_in(cfg: NetConfig, layer: LayerConfig, shape) -> int:
    fan = int(np.prod(shape[-3:]))
    if cfg.flavor == "precm" and layer.type in ("precm2", "precm3"):
        fan *= 4  # four orientation blocks feed every output
    return fan


@dataclass
class PrecmNet:
    config: NetConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())


def build_net(config: NetConfig | dict) -> PrecmNet:
    """Validate ``config`` and draw Gaussian (He) initial weights from its seed."""
    cfg = config if isinstance(config, NetConfig) else NetConfig.from_dict(config)
    validate_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    params = {}
    layers = dict(enumerate(cfg.layers))
    for name, shape in param_shapes(cfg).items():
        layer = layers[int(name[1 : name.index(".")])]
        if name.endswith(".weight"):
            std = np.sqrt(2.0 / _fan_in(cfg, layer, shape))
            params[name] = (rng.standard_normal(shape) * std).astype(cfg.np_dtype)
        else:
            params[name] = np.zeros(shape, dtype=cfg.np_dtype)
    return PrecmNet(cfg, params)


def forward(net: PrecmNet, x, params: dict | None = None):
    """Run the network; ``params`` may hold taped Vars in place of the stored arrays."""
    params = net.params if params is None else params
    cfg = net.config
    h = x
    oriented: OrientedFeature | None = None
    for i, layer in enumerate(cfg.layers):
        w = params.get(f"L{i}.weight")
        b = params.get(f"L{i}.bias")
        if layer.type in POINTWISE_TYPES:
            fn = ad.relu if layer.type == "relu" else ad.sigmoid
            if oriented is not None:
                oriented = OrientedFeature(fn(oriented.base), oriented.block_channels)
            else:
                h = fn(h)
            continue
        if cfg.flavor == "baseline":
            spec = ConvSpec(kernel=layer.kernel, input=value(h).shape[:1:-1], stride=layer.stride,
                            dilation=layer.dilation)
            h = ad.conv_sigma(h, w, spec, 0)
            if b is not None:
                h = ad.add_bias(h, b)
            continue
        src = oriented.base if oriented is not None else h
        spec = layer_spec(src, layer.kernel, layer.stride, layer.dilation)
        if layer.type == "precm1":
            oriented = precm1_forward(h, w, spec, b)
        elif layer.type == "precm2":
            oriented = precm2_forward(oriented, w, spec, b)
        else:
            h = precm3_forward(oriented, w, spec, b)
            oriented = None
    return h


# ---- parameter files -------------------------------------------------------------


def _as_4d(a: np.ndarray) -> np.ndarray:
    if a.ndim == 4:
        return a
    if a.ndim == 1:
        return a.reshape(1, 1, 1, -1)
    if a.ndim == 5:
        return a.reshape(a.shape[0] * a.shape[1], *a.shape[2:])
    raise ValueError(f"cannot store a {a.ndim}-axis parameter")


def save_params(net: PrecmNet, out_dir) -> None:
    """Write one PRT1 file per parameter plus ``manifest.json`` (written last)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(net.params):
        p = net.params[name]
        fname = f"{name}.prt1"
        save_prt1(out_dir / fname, _as_4d(p))
        entries.append({"name": name, "file": fname, "shape": list(p.shape)})
    manifest = {"config": net.config.to_dict(), "params": entries}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_params(in_dir) -> PrecmNet:
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / "manifest.json").read_text())
    cfg = NetConfig.from_dict(manifest["config"])
    validate_config(cfg)
    params = {}
    for e in manifest["params"]:
        params[e["name"]] = load_prt1(in_dir / e["file"]).reshape(e["shape"])
    expected = param_shapes(cfg)
    if {k: tuple(v.shape) for k, v in params.items()} != expected:
        raise ConfigError("parameter files do not match the manifest's network config")
    return PrecmNet(cfg, params)
