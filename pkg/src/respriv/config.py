"""Flat key = value experiment configuration files.

One experiment per file. Lines are `key = value`; `#` starts a comment;
blank lines are ignored. Values are sniffed as bool/int/float and fall back
to strings. Dotted keys group related settings (dataset.n, noise.gamma, ...).
"""

__all__ = ["ConfigError", "parse_config_text", "load_config", "resolve_config", "parse_schedule"]


class ConfigError(ValueError):
    pass


def _sniff(value):
    low = value.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value


def parse_config_text(text, source="<config>"):
    out = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{line_no}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        out[key] = _sniff(value)
    return out


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def resolve_config(defaults, overrides, source="<config>"):
    """Materialize defaults; reject keys the experiment does not know."""
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise ConfigError(f"{source}: unknown keys: {', '.join(sorted(unknown))}")
    resolved = dict(defaults)
    resolved.update(overrides)
    return resolved


def parse_schedule(text):
    """Learning-rate schedule string 'epoch:divisor,epoch:divisor' -> tuple."""
    if not text:
        return ()
    entries = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            epoch, divisor = part.split(":")
            entries.append((int(epoch), float(divisor)))
        except ValueError:
            raise ConfigError(f"bad schedule entry {part!r}; want 'epoch:divisor'") from None
    return tuple(entries)
