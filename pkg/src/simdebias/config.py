"""INI experiment files.

Every section other than ``[DEFAULT]`` describes a cell template; keys in
``[DEFAULT]`` are shared by all sections.  Numeric fields accept sweeps,
``n = 200,500`` or ``s = 5-10``, and a section expands to the cross-product
of its sweeps.  Example::

    [DEFAULT]
    replicates = 200
    link = sign

    [model1_known]
    n = 200,500
    kappa = 0,0.5
    s = 5
    sigma_known = yes
"""

import configparser
import itertools
import re

from .design import LinkModel
from .exceptions import ConfigError, InputError
from .simulation import ExperimentConfig

SWEEP_FIELDS = {
    "n": int,
    "p": int,
    "s": int,
    "kappa": float,
    "mean_shift": float,
    "replicates": int,
    "level": float,
    "target": int,
}
KNOWN_KEYS = set(SWEEP_FIELDS) | {
    "link", "design", "radial", "sigma_known", "degrees", "seed", "crossfit",
    "null_probe_count", "tau",
}
_RANGE = re.compile(r"^\s*(\d+)\s*-\s*(\d+)\s*$")


def parse_int_list(text, *, name="value"):
    """``"1-10"`` -> [1..10]; ``"1,3,5"`` -> [1, 3, 5]; parts may mix."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        m = _RANGE.match(part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ConfigError(f"empty range {part!r} for {name}")
            out.extend(range(lo, hi + 1))
            continue
        try:
            out.append(int(part))
        except ValueError:
            raise ConfigError(f"cannot parse {part!r} as an integer for {name}") from None
    if not out:
        raise ConfigError(f"no values given for {name}")
    return out


def parse_values(text, cast, *, name="value"):
    if cast is int:
        return parse_int_list(text, name=name)
    values = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            values.append(cast(part))
        except ValueError:
            raise ConfigError(f"cannot parse {part!r} for {name}") from None
    if not values:
        raise ConfigError(f"no values given for {name}")
    return values


def parse_bool(text, *, name="flag"):
    t = str(text).strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"cannot parse {text!r} as a boolean for {name}")


def _fmt(v):
    return f"{v:g}" if isinstance(v, float) else str(v)


def expand_section(name, items, *, seed=None):
    """Yield ``(label, ExperimentConfig)`` for one section."""
    unknown = set(items) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {', '.join(sorted(unknown))}")
    if "n" not in items:
        raise ConfigError(f"[{name}] is missing the required key 'n'")
    sweeps = {key: parse_values(items[key], cast, name=key) for key, cast in SWEEP_FIELDS.items() if key in items}
    try:
        link = LinkModel.parse(items.get("link", "sign"))
    except InputError as exc:
        raise ConfigError(f"[{name}] {exc}") from None
    fixed = {
        "link": link,
        "design": items.get("design", "gaussian").strip().lower(),
        "radial": items.get("radial", "uniform").strip().lower(),
        "sigma_known": parse_bool(items.get("sigma_known", "yes"), name="sigma_known"),
        "crossfit": parse_bool(items.get("crossfit", "no"), name="crossfit"),
        "degrees": tuple(parse_int_list(items["degrees"], name="degrees")) if "degrees" in items else (),
        "null_probe_count": parse_values(items.get("null_probe_count", "10"), int, name="null_probe_count")[0],
        "tau_pattern": items.get("tau", "triangular").strip().lower(),
    }
    if seed is None:
        seed = parse_values(items.get("seed", "0"), int, name="seed")[0]
    keys = list(sweeps)
    for combo in itertools.product(*(sweeps[k] for k in keys)):
        values = dict(zip(keys, combo))
        if "p" not in values:
            values["p"] = 2 * values["n"]
        if "target" in values:
            values["target"] = values["target"] - 1  # files are 1-based
        try:
            cfg = ExperimentConfig(**values, **fixed, master_seed=int(seed))
        except (ConfigError, InputError) as exc:
            raise ConfigError(f"[{name}] {exc}") from None
        swept = [f"{k}={_fmt(v)}" for k, v in zip(keys, combo) if len(sweeps[k]) > 1]
        label = f"{name}[{','.join(swept)}]" if swept else name
        yield label, cfg


def load_config_text(text, *, seed=None, source="<config>"):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not parser.sections():
        raise ConfigError(f"{source}: no experiment sections found")
    cells = []
    for name in parser.sections():
        cells.extend(expand_section(name, dict(parser[name]), seed=seed))
    return cells


def load_config(path, *, seed=None):
    """Read an experiment file; returns the list of ``(label, ExperimentConfig)`` cells."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return load_config_text(text, seed=seed, source=str(path))
