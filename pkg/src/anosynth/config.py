"""Flat key=value configuration files.

One assignment per line, `#` starts a comment, values stay strings until a
typed getter converts them. Command-line flags override file values.
"""
from pathlib import Path


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "T": "1000",
    "beta_start": "1e-4",
    "beta_end": "0.02",
    "steps": "50",
    "t1": "2",
    "seed": "0",
    "farm": "1",
    "denoiser": "gaussian",
    "mu0": "0.3",
    "s0sq": "0.04",
    "x0_const": "0.0",
    "lambda1": "1.0",
    "lambda2": "1.0",
    "lr": "0.05",
    "batch": "4",
    "iters": "3000",
    "features": "16",
    "embed_dim": "64",
    "corpus_size": "200",
    "corpus_hw": "32",
    "channels": "1",
}


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def load_config(path) -> dict:
    return parse_config(Path(path).read_text())


class Config:
    """Defaults, then file values, then explicit overrides."""

    def __init__(self, file_values=None, overrides=None):
        self.values = dict(DEFAULTS)
        self.values.update(file_values or {})
        self.values.update({k: str(v) for k, v in (overrides or {}).items()
                            if v is not None})

    def get(self, key, default=None):
        return self.values.get(key, default)

    def get_int(self, key) -> int:
        try:
            return int(self.values[key])
        except (KeyError, ValueError):
            raise ConfigError(f"config key {key!r} must be an integer, "
                              f"got {self.values.get(key)!r}")

    def get_float(self, key) -> float:
        try:
            return float(self.values[key])
        except (KeyError, ValueError):
            raise ConfigError(f"config key {key!r} must be a number, "
                              f"got {self.values.get(key)!r}")

    def get_bool(self, key) -> bool:
        v = self.values.get(key, "0").strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r} must be boolean-like, got {v!r}")
