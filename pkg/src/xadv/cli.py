"""Command-line front end.

Configuration comes from a TOML file (``--config``), then ``XADV_<KEY>``
environment variables, then command-line flags; later sources win. Every
key maps one-to-one onto a :class:`RunConfig` field and unknown keys are
rejected.

Output layout under ``output``::

    adv/*.png  manifests/*.json  attack_summary.json
    records.csv  summary.json  analysis/*.csv  defended/*.png  aug/*.png
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import analyze_image, similarity_table, write_analysis
from .attack import (
    AttackConfig,
    AttackError,
    ensemble_attack,
    output_name,
    pgd_attack,
    write_manifest,
)
from .augment import (
    ALL_METHODS,
    AugmentationError,
    AugmentationSpec,
    Method,
    augment,
    bundled_word_set,
    load_patch_set,
    load_word_set,
)
from .evaluation import (
    AdversarialItem,
    DefenseSpec,
    apply_defense,
    bundled_prompts,
    evaluate_matrix,
    load_prompts,
    write_records_csv,
    write_summary,
)
from .image import ImageError, _atomic_write_bytes, load_image, png_bytes, save_image
from .models.base import AdapterError, serialized
from .targets import DEFAULT_PROMPT

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

RESERVED_ENV = {"XADV_PURE_PYTHON"}
SUBCOMMANDS = ("attack", "ensemble-attack", "evaluate", "defend", "analyze", "render-aug")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    target: str | None = None
    epsilon: float = 16 / 255
    alpha: float = 1 / 255
    iterations: int = 1000
    prompt: str = DEFAULT_PROMPT
    method: str = "NONE"
    augmentation: dict = field(default_factory=dict)
    seed: int = 0
    init: str = "uniform"
    aggregate: str = "mean"
    input: list = field(default_factory=list)
    output: str = "out"
    adversarial: str | None = None
    words: str | None = None
    patches: str | None = None
    prompts: str = "bundled"
    surrogates: list = field(default_factory=lambda: ["toy:surrogate"])
    victims: list = field(default_factory=lambda: ["toy:victim-shared", "toy:victim-independent"])
    scorer: str = "toy:scorer"
    defense: str = "none"
    noise_mean: float = 0.0
    noise_std: float = 0.005
    kernel_size: int = 3
    sigma: float = 0.1
    parallelism: int = 1
    whole_word: bool = False
    clip_weight: float = 1.0
    include_clean: bool = True
    samples: int = 300
    methods: list = field(default_factory=lambda: [m.value for m in ALL_METHODS])
    texts: list = field(default_factory=list)


FIELD_TYPES = {f.name: f for f in fields(RunConfig)}
_DEFAULTS = RunConfig()


def _kind(name):
    default = getattr(_DEFAULTS, name)
    if name in ("target", "adversarial", "words", "patches"):
        return str
    if isinstance(default, bool):
        return bool
    return type(default)


def _coerce(name, value):
    """Turn a file/env/flag value into the field's type."""
    kind = _kind(name)
    try:
        if kind is float:
            if isinstance(value, str):
                return float(Fraction(value.strip()))
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind is bool:
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind is list:
            if isinstance(value, str):
                return [v.strip() for v in value.split(",") if v.strip()]
            return [str(v) for v in value]
        if kind is dict:
            if isinstance(value, str):
                return dict(_parse_assignment(v) for v in value.split(",") if v.strip())
            if not isinstance(value, dict):
                raise TypeError
            return dict(value)
        if not isinstance(value, str):
            raise TypeError
        return value
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(f"{name}: cannot interpret {value!r} as {kind.__name__}") from None


def _parse_assignment(text):
    key, sep, raw = text.partition("=")
    if not sep:
        raise ConfigError(f"expected key=value, got {text!r}")
    raw = raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.strip(), value


def _merge(values, source, into):
    for key, value in values.items():
        name = key.replace("-", "_")
        if name not in FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r} in {source}")
        into[name] = _coerce(name, value)


def parse_config(path=None, flags=None, env=None, *, command=None):
    """Resolve defaults, file, environment and flags into a validated RunConfig."""
    merged = {}
    if path is not None:
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        _merge(data, str(path), merged)
    env = os.environ if env is None else env
    from_env = {k[5:].lower(): v for k, v in env.items()
                if k.startswith("XADV_") and k not in RESERVED_ENV}
    _merge(from_env, "environment", merged)
    _merge({k: v for k, v in (flags or {}).items() if v is not None}, "flags", merged)
    cfg = RunConfig(**merged)
    validate(cfg, command)
    return cfg


def _load_words(spec):
    if spec is None:
        return None
    if spec.startswith("bundled:"):
        return bundled_word_set(spec.split(":", 1)[1])
    return load_word_set(spec)


def _load_patches(spec):
    if spec is None:
        return None
    if spec == "toy:concepts":
        from .models.toy import concept_patches

        return concept_patches()
    return load_patch_set(spec)


def _check_path(name, value, *, allow_prefix=()):
    if value is None or any(value.startswith(p) for p in allow_prefix):
        return
    if not Path(value).exists():
        raise ConfigError(f"{name}: path does not exist: {value}")


def augmentation_spec(cfg: RunConfig, method=None) -> AugmentationSpec:
    method = Method.parse(method or cfg.method)
    params = cfg.augmentation if method is Method.parse(cfg.method) else {}
    words = _load_words(cfg.words) if method is Method.TATM else None
    patches = _load_patches(cfg.patches) if method in (Method.ADMIX, Method.AIP) else None
    spec = AugmentationSpec(method, params, words=words, patches=patches)
    spec.check_resources()
    return spec


def validate(cfg: RunConfig, command=None):
    if cfg.target is not None and not cfg.target.strip():
        raise ConfigError("target must be non-empty")
    if command in ("attack", "ensemble-attack", "evaluate") and not cfg.target:
        raise ConfigError(f"{command} requires a target")
    if not 0 < cfg.epsilon <= 1:
        raise ConfigError(f"epsilon must be in (0, 1], got {cfg.epsilon}")
    if not 0 < cfg.alpha <= cfg.epsilon:
        raise ConfigError(f"alpha must be in (0, epsilon], got {cfg.alpha}")
    if cfg.iterations < 0:
        raise ConfigError("iterations must be >= 0")
    if cfg.parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    if cfg.samples < 3:
        raise ConfigError("samples must be >= 3")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must fit in 64 unsigned bits")
    if cfg.init not in ("uniform", "zero"):
        raise ConfigError("init must be 'uniform' or 'zero'")
    if cfg.aggregate not in ("mean", "sum"):
        raise ConfigError("aggregate must be 'mean' or 'sum'")
    if cfg.defense not in ("none", "gaussian_noise", "gaussian_blur"):
        raise ConfigError("defense must be none, gaussian_noise or gaussian_blur")
    for p in cfg.input:
        _check_path("input", p)
    _check_path("words", cfg.words, allow_prefix=("bundled:",))
    _check_path("patches", cfg.patches, allow_prefix=("toy:",))
    _check_path("prompts", cfg.prompts, allow_prefix=("bundled",))
    if command is not None and command != "make-fixtures" and not cfg.input:
        raise ConfigError(f"{command} requires at least one input")
    methods = {"analyze": cfg.methods}.get(command, [cfg.method])
    try:
        for m in methods:
            augmentation_spec(cfg, m)
        defense_spec(cfg)
    except (AugmentationError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if command == "evaluate" and not cfg.victims:
        raise ConfigError("evaluate needs at least one victim")
    if command in ("attack", "ensemble-attack") and not cfg.surrogates:
        raise ConfigError(f"{command} needs at least one surrogate")
    if command == "attack" and len(cfg.surrogates) > 1:
        raise ConfigError("attack takes one surrogate; use ensemble-attack for several")
    if command == "defend" and cfg.defense == "none":
        raise ConfigError("defend needs a defense")


def defense_spec(cfg: RunConfig):
    if cfg.defense == "none":
        return None
    return DefenseSpec(cfg.defense, noise_mean=cfg.noise_mean, noise_std=cfg.noise_std,
                       kernel_size=cfg.kernel_size, sigma=cfg.sigma)


def list_images(paths):
    """``(image_id, path)`` pairs sorted by id; directories contribute their PNGs."""
    found = {}
    for p in map(Path, paths):
        files = sorted(p.glob("*.png")) if p.is_dir() else [p]
        for f in files:
            if f.stem in found and found[f.stem] != f:
                raise ConfigError(f"duplicate image id {f.stem!r}")
            found[f.stem] = f
    return sorted(found.items())


def _resolve(endpoint):
    from .models.remote import resolve

    try:
        return resolve(endpoint)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_json(path, data):
    _atomic_write_bytes(Path(path), (json.dumps(data, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _ensure(*dirs):
    for d in dirs:
        Path(d).mkdir(parents=True, exist_ok=True)


def _map(fn, items, parallelism):
    if parallelism == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


def cmd_attack(cfg: RunConfig, ensemble=False):
    out = Path(cfg.output)
    adv_dir, man_dir = out / "adv", out / "manifests"
    _ensure(adv_dir, man_dir)
    surrogates = [serialized(_resolve(e)) for e in cfg.surrogates]
    spec = augmentation_spec(cfg)
    config = AttackConfig(
        target=cfg.target, epsilon=cfg.epsilon, alpha=cfg.alpha, iterations=cfg.iterations,
        prompt=cfg.prompt, augmentation=spec, seed=cfg.seed, init=cfg.init, aggregate=cfg.aggregate,
    )

    def run(entry):
        image_id, path = entry
        name = output_name(image_id, spec.method.value, cfg.target)
        try:
            image = load_image(path)
            if ensemble:
                result = ensemble_attack(surrogates, image, config)
            else:
                result = pgd_attack(surrogates[0], image, config)
            png = adv_dir / name
            save_image(result.adversarial_image, png)
            manifest = write_manifest(result, man_dir / (Path(name).stem + ".json"), png, image_id)
            return {"image_id": image_id, "output": str(png), "png_sha256": manifest["png_sha256"],
                    "wall_time_s": result.wall_time_s}
        except (AttackError, AdapterError, ImageError, OSError) as exc:
            return {"image_id": image_id, "error": str(exc),
                    "iteration": getattr(exc, "iteration", None)}

    runs = _map(run, list_images(cfg.input), cfg.parallelism)
    failures = sum("error" in r for r in runs)
    _write_json(out / "attack_summary.json", {
        "command": "ensemble-attack" if ensemble else "attack",
        "runs": runs, "failures": failures, "incomplete": failures > 0,
    })
    return failures


def _adversarial_items(cfg: RunConfig, clean_ids):
    out = Path(cfg.output)
    adv_dir = Path(cfg.adversarial) if cfg.adversarial else out / "adv"
    if not adv_dir.is_dir():
        raise ConfigError(f"no adversarial images at {adv_dir}")
    man_dir = adv_dir.parent / "manifests"
    items = []
    for png in sorted(adv_dir.glob("*.png")):
        manifest = man_dir / f"{png.stem}.json"
        if manifest.exists():
            data = json.loads(manifest.read_text(encoding="utf-8"))
            source = data["image_id"]
            method = data["config"]["augmentation"]["method"]
            surrogate = "+".join(data["surrogate_ids"])
        else:
            source, method = (png.stem.split(".") + ["unknown"])[:2]
            surrogate = ""
        if source not in clean_ids:
            raise ConfigError(f"{png.name}: no clean input with id {source!r}")
        items.append(AdversarialItem(png.stem, load_image(png), method, surrogate, source))
    if not items:
        raise ConfigError(f"no adversarial PNGs in {adv_dir}")
    return items


def cmd_evaluate(cfg: RunConfig):
    out = Path(cfg.output)
    _ensure(out)
    clean = {i: load_image(p) for i, p in list_images(cfg.input)}
    items = _adversarial_items(cfg, clean)
    if cfg.include_clean:
        items += [AdversarialItem(f"{i}.clean", img, "clean", "", i) for i, img in clean.items()]
    prompts = bundled_prompts() if cfg.prompts == "bundled" else load_prompts(cfg.prompts)
    victims = [_resolve(e) for e in cfg.victims]
    scorer = _resolve(cfg.scorer)
    records = evaluate_matrix(
        items, victims, prompts, cfg.target, defense_spec(cfg), scorer,
        {i: (img, None) for i, img in clean.items()},
        seed=cfg.seed, parallelism=cfg.parallelism, whole_word=cfg.whole_word,
        clip_weight=cfg.clip_weight,
    )
    write_records_csv(records, out / "records.csv")
    summary = write_summary(records, out / "summary.json")
    return summary["failures"]


def cmd_defend(cfg: RunConfig):
    dest = Path(cfg.output) / "defended"
    _ensure(dest)
    spec = defense_spec(cfg)
    failures = 0
    for image_id, path in list_images(cfg.input):
        try:
            rng = np.random.default_rng([cfg.seed, zlib.crc32(image_id.encode("utf-8"))])
            save_image(apply_defense(load_image(path), spec, rng), dest / f"{image_id}.png")
        except (ImageError, OSError) as exc:
            print(json.dumps({"image_id": image_id, "error": str(exc)}), file=sys.stderr)
            failures += 1
    return failures


def cmd_analyze(cfg: RunConfig):
    dest = Path(cfg.output) / "analysis"
    _ensure(dest)
    scorer = _resolve(cfg.scorer)
    specs = {Method.parse(m): augmentation_spec(cfg, m) for m in cfg.methods}
    failures = 0
    for image_id, path in list_images(cfg.input):
        image = load_image(path)
        try:
            result = analyze_image(scorer, image, specs, n=cfg.samples, seed=cfg.seed, image_id=image_id)
            table = None
            if cfg.texts:
                rng = np.random.default_rng([cfg.seed, 1])
                rows = [("clean", image)] + [(m.value, augment(image, s, rng)) for m, s in specs.items()]
                table = similarity_table(scorer, rows, cfg.texts)
                failures += len(table.errors)
            write_analysis(result, dest, table)
        except (AdapterError, ValueError) as exc:
            print(json.dumps({"image_id": image_id, "error": str(exc)}), file=sys.stderr)
            failures += 1
    return failures


def cmd_render_aug(cfg: RunConfig):
    dest = Path(cfg.output) / "aug"
    _ensure(dest)
    spec = augmentation_spec(cfg)
    for image_id, path in list_images(cfg.input):
        rng = np.random.default_rng(cfg.seed)
        save_image(augment(load_image(path), spec, rng), dest / f"{image_id}.{spec.method.value}.png")
    return 0


def cmd_make_fixtures(directory, count, size, seed):
    from .models.toy import fixture_images

    directory = Path(directory)
    _ensure(directory)
    for image_id, image, _ in fixture_images(count, size=size, seed=seed):
        _atomic_write_bytes(directory / f"{image_id}.png", png_bytes(image))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="xadv", description="Transfer attacks on vision-language models.")
    p.add_argument("--version", action="version", version=f"xadv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("inputs", nargs="*", help="input images or directories")
        for f in fields(RunConfig):
            if f.name == "input":
                continue
            sp.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                            metavar=f.name.upper())
    mf = sub.add_parser("make-fixtures", help="write toy fixture PNGs")
    mf.add_argument("directory")
    mf.add_argument("--count", type=int, default=5)
    mf.add_argument("--size", type=int, default=32)
    mf.add_argument("--seed", type=int, default=1000)
    return p


def _fail(kind, message, code=2):
    print(json.dumps({"status": "error", "kind": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "make-fixtures":
        return cmd_make_fixtures(args.directory, args.count, args.size, args.seed)
    flags = {f.name: getattr(args, f.name) for f in fields(RunConfig) if f.name != "input"}
    if args.inputs:
        flags["input"] = args.inputs
    try:
        cfg = parse_config(args.config, flags, command=args.command)
        handler = {
            "attack": cmd_attack,
            "ensemble-attack": lambda c: cmd_attack(c, ensemble=True),
            "evaluate": cmd_evaluate,
            "defend": cmd_defend,
            "analyze": cmd_analyze,
            "render-aug": cmd_render_aug,
        }[args.command]
        failures = handler(cfg)
    except ConfigError as exc:
        return _fail("config", str(exc))
    except (AdapterError, ImageError, OSError) as exc:
        return _fail("runtime", str(exc), 1)
    if failures:
        print(json.dumps({"status": "incomplete", "failures": failures}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
