"""Plain-text key=value job configuration.

One `key = value` pair per line; blank lines and `#` comments are ignored.
Unknown keys are rejected.  parse -> serialize -> parse is idempotent.
"""

__all__ = ["ConfigError", "KNOWN_KEYS", "parse_config", "serialize_config",
           "load_config"]


class ConfigError(ValueError):
    pass


def _parse_str_list(s):
    return [p.strip() for p in s.split(",") if p.strip()]


# key -> (parser, serializer)
_INT = (int, str)
_FLOAT = (float, repr)
_STR = (str, str)
_LIST = (_parse_str_list, ",".join)

KNOWN_KEYS = {
    # synthesis / objective
    "size": _INT,
    "layers": _LIST,
    "alpha": _FLOAT,
    "gamma": _FLOAT,
    "tv_exponent": _FLOAT,
    "grad_normalize": _STR,
    "content_layer": _STR,
    "lambda": _FLOAT,
    "beta": _FLOAT,
    "init": _STR,
    "init_image": _STR,
    "iterations": _INT,
    "seed": _INT,
    "transfer_alpha": _FLOAT,
    "snapshot_every": _INT,
    # quilting
    "patch": _INT,
    "overlap": _INT,
    "tolerance": _FLOAT,
    "out_h": _INT,
    "out_w": _INT,
    # training / jitter harness
    "head": _STR,
    "jitter": _STR,
    "epochs": _INT,
    "n_per_class": _INT,
    "base_size": _INT,
    "crop": _INT,
    # network
    "net": _STR,
}


def parse_config(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        parser, _ = KNOWN_KEYS[key]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return values


def serialize_config(values):
    lines = []
    for key in sorted(values):
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        _, ser = KNOWN_KEYS[key]
        lines.append(f"{key} = {ser(values[key])}")
    return "\n".join(lines) + "\n"


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
