"""Multi-scale fine-grained alignment between vision tokens and caption/query tokens."""
from __future__ import annotations

from dataclasses import dataclass, field

from . import tensor as T
from .encoder import SCALES
from .errors import ConfigError, DimensionError, ModeError
from .nn import MLP, LayerNorm, Module, ParamFactory


@dataclass(frozen=True)
class MFAConfig:
    caption_len: int = 16   # L_t
    caption_dim: int = 48   # d_t
    d: int = 256

    def __post_init__(self):
        if self.caption_len < 2 or self.caption_len % 2:
            raise ConfigError(f"caption_len must be even and >= 2, got {self.caption_len}")
        if self.caption_dim <= 0 or self.d <= 0:
            raise ConfigError("caption_dim and d must be positive")


@dataclass
class GroupedTokens:
    """Image-grouped tokens per stride; role is 'caption' (I) or 'query' (Q)."""
    role: str
    scales: dict = field(default_factory=dict)

    def __getitem__(self, n):
        return self.scales[n]

    def __iter__(self):
        return iter(sorted(self.scales))

    def __len__(self):
        return len(self.scales)


class MixerBlock(Module):
    """Token-mixing MLP over the sequence axis, then a channel MLP.

    When the channel MLP changes the width the channel residual is dropped.
    """

    def __init__(self, pf: ParamFactory, name: str, length: int, d_in: int, d_out: int,
                 token_hidden: int, channel_hidden: int):
        super().__init__()
        self.ln_tokens = LayerNorm(pf, f"{name}.ln_tokens", d_in)
        self.token_mlp = MLP(pf, f"{name}.token_mlp", length, token_hidden, length, std="fan_in")
        self.ln_channels = LayerNorm(pf, f"{name}.ln_channels", d_in)
        self.channel_mlp = MLP(pf, f"{name}.channel_mlp", d_in, channel_hidden, d_out,
                               std="fan_in")
        self.residual = d_in == d_out

    def __call__(self, t):
        t_s = T.transpose(self.token_mlp(T.transpose(self.ln_tokens(t)))) + t
        t_c = self.channel_mlp(self.ln_channels(t_s))
        return t_c + t_s if self.residual else t_c


class TextMixer(Module):
    def __init__(self, pf: ParamFactory, cfg: MFAConfig, name: str = "mfa.mixer"):
        super().__init__()
        L, dt = cfg.caption_len, cfg.caption_dim
        self.block1 = MixerBlock(pf, f"{name}.block1", L, dt, dt, 2 * L, 2 * dt)
        # sequence down-scaling: (L/2 x L) acting on the token axis
        self.W_half = pf.normal(f"{name}.W_half", (L // 2, L), std=1.0 / L ** 0.5)
        self.block2 = MixerBlock(pf, f"{name}.block2", L // 2, dt, cfg.d, L, cfg.d)
        self.cfg = cfg

    def __call__(self, t):
        if t.shape != (self.cfg.caption_len, self.cfg.caption_dim):
            raise ConfigError(f"caption tokens must be {(self.cfg.caption_len, self.cfg.caption_dim)}, "
                              f"got {t.shape}")
        return self.block2(T.matmul(self.W_half, self.block1(t)))


def token_match(v, u):
    """Group text tokens ``u`` onto image tokens ``v``.

    similarity -> row min-max -> keep entries >= 1/L_v -> row softmax -> weights @ u.
    Zeroed entries stay in the softmax support at logit 0.
    """
    v, u = T.as_tensor(v), T.as_tensor(u)
    if v.shape[1] != u.shape[1]:
        raise DimensionError(f"token_match width mismatch: {v.shape} vs {u.shape}")
    s = T.minmax_rows(T.matmul(v, T.transpose(u)))
    s_hat = T.sparsify(s, 1.0 / v.shape[0])
    return T.matmul(T.softmax_rows(s_hat), u)


class MFA(Module):
    def __init__(self, pf: ParamFactory, cfg: MFAConfig, d_v: int):
        super().__init__()
        self.cfg = cfg
        self.projector = MLP(pf, "mfa.projector", d_v, cfg.d, cfg.d, std="fan_in")
        self.mixer = TextMixer(pf, cfg)
        self.query = pf.normal("mfa.query.Q0", (cfg.caption_len, cfg.caption_dim))

    def project(self, feat):
        return self.projector(feat)

    def mix(self, tokens):
        return self.mixer(T.as_tensor(tokens))

    def align_all(self, feats: dict, caption=None, training: bool = True):
        """Return (I-set or None, Q-set); the query path is always computed."""
        if training and caption is None:
            raise ModeError("training mode needs a caption embedding")
        projected = {n: self.project(feats[n]) for n in SCALES}
        q0 = self.mix(self.query)
        query_set = GroupedTokens("query", {n: token_match(projected[n], q0) for n in SCALES})
        caption_set = None
        if caption is not None:
            t = self.mix(caption)
            caption_set = GroupedTokens("caption", {n: token_match(projected[n], t) for n in SCALES})
        return caption_set, query_set
