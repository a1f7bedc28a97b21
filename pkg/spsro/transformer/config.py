from __future__ import annotations

import typing as t

from pydantic import BaseModel, ConfigDict, Field, model_validator

from spsro.modes import Mode


class ModelConfig(BaseModel):
    """
    Shape of the sequence model.

    :param blocks:
        Number of transformer blocks.
    :param heads:
        Attention heads per block. ``embed_dim`` must be divisible by it.
    :param embed_dim:
        Width of every token embedding.
    :param context_epochs:
        How many SPSRO epochs fit in the context, i.e. the maximum run length.
        One learned embedding exists per epoch.
    :param q:
        Quantization level - the number of output bins.
    :param mode:
        ``'nfg'`` (alpha and y tokens) or ``'efg'`` (alpha, beta, K and y).
    :param num_solvers:
        How many meta-solver weights each epoch carries (``m``).
    :param dropout:
        Applied to embeddings and residual branches during training only.
    :param dtype:
        ``'float32'`` for normal use, ``'float64'`` for gradient checking.

    """

    model_config = ConfigDict(extra="forbid")

    blocks: int = Field(default=2, ge=1)
    heads: int = Field(default=4, ge=1)
    embed_dim: int = Field(default=128, ge=1)
    context_epochs: int = Field(default=50, ge=1)
    q: int = Field(default=20, ge=2)
    mode: Mode = Mode.efg
    num_solvers: int = Field(default=3, ge=1)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    dtype: t.Literal["float32", "float64"] = "float32"

    @model_validator(mode="after")
    def check_heads(self) -> "ModelConfig":
        if self.embed_dim % self.heads:
            raise ValueError(
                f"embed_dim ({self.embed_dim}) must be divisible by heads "
                f"({self.heads})."
            )
        return self

    @property
    def tokens_per_epoch(self) -> int:
        return self.mode.tokens_per_epoch(self.num_solvers)

    @property
    def context_tokens(self) -> int:
        return self.context_epochs * self.tokens_per_epoch


class TrainConfig(BaseModel):
    """
    Optimisation settings. Left unset, ``final_tokens`` is the number of
    tokens predicted over the whole run, so the cosine ends with training.
    """

    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(default=64, ge=1)
    lr: float = Field(default=3e-4, gt=0.0)
    betas: t.Tuple[float, float] = (0.9, 0.95)
    grad_norm_clip: float = Field(default=1.0, gt=0.0)
    weight_decay: float = Field(default=0.1, ge=0.0)
    warmup_tokens: int = Field(default=5000, ge=0)
    final_tokens: t.Optional[int] = Field(default=None, gt=0)
    epochs: int = Field(default=50, ge=1)
    seed: int = Field(default=0, ge=0)
