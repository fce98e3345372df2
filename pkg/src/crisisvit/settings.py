"""Environment-driven runtime settings.

Values come from the process environment, which the CLI populates from a
``.env`` file in the working directory.
"""

import os
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch


def _flag(name: str, default: str = "0") -> bool:
    return os.getenv(name, default).strip().lower() in {"1", "true", "yes", "on"}


@dataclass(frozen=True)
class Settings:
    """Runtime settings shared by every command."""

    deterministic: bool = False
    device: str = "auto"
    num_workers: int = 0
    image_dir: Path = Path("data/images")
    output_dir: Path = Path("runs")

    @classmethod
    def from_env(cls) -> "Settings":
        """Read settings from CRISISVIT_* environment variables."""
        return cls(
            deterministic=_flag("CRISISVIT_DETERMINISTIC"),
            device=os.getenv("CRISISVIT_DEVICE", "auto"),
            num_workers=int(os.getenv("CRISISVIT_NUM_WORKERS", "0")),
            image_dir=Path(os.getenv("CRISISVIT_IMAGE_DIR", "data/images")),
            output_dir=Path(os.getenv("CRISISVIT_OUTPUT_DIR", "runs")),
        )

    def torch_device(self) -> torch.device:
        """Resolve the configured device name."""
        if self.device == "auto":
            return torch.device("cuda" if torch.cuda.is_available() else "cpu")
        return torch.device(self.device)

    def apply(self) -> None:
        """Switch torch into deterministic mode when requested."""
        if not self.deterministic:
            return
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
        torch.use_deterministic_algorithms(True)
        torch.backends.cudnn.benchmark = False


def seed_everything(seed: int) -> None:
    """Seed python, numpy and torch global generators."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
