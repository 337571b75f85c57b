"""Command-line front end.

Every subcommand reads a plain-text config of `key=value` lines (blank
lines and `#` comments ignored), overridden by repeated `--set key=value`
flags.  Validation failures name the offending key and exit nonzero.

Artifacts land in the --out directory: results CSV, FER plot, run
manifest, model bundles, record archives, and path files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import codes as codes_mod
from .channel import llr as channel_llr
from .channel import modulate, sigma_from_snr, worker_stream
from .gf2 import build_redundant_pcm
from .models import (GateConfig, dia_train, load_bundle, load_records,
                     save_bundle, save_dia_records, save_pattern_records,
                     save_swa_records, save_ude_records, swa_train, ude_train)
from .neural import TrainConfig
from .nms import NmsParams, train_alpha
from .path import (PathBuffer, almlt_order, estimate_lambda, load_path_buffer,
                   save_path_buffer)
from .pipeline import HybridConfig, OsdMode, collect_failures
from .simulate import (ComplexityModel, attach_complexity, export_csv,
                       monte_carlo, plot_fer)

MANIFEST_VERSION = 1


class ConfigError(Exception):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


def parse_config_text(text: str) -> dict:
    cfg = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}", "expected key=value")
        key, _, val = line.partition("=")
        cfg[key.strip()] = val.strip()
    return cfg


def load_config(args) -> dict:
    cfg = {}
    if args.config:
        p = Path(args.config)
        if not p.exists():
            raise ConfigError("config", f"file not found: {p}")
        cfg.update(parse_config_text(p.read_text()))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError("--set", f"expected key=value, got {item!r}")
        key, _, val = item.partition("=")
        cfg[key.strip()] = val.strip()
    return cfg


def _get(cfg, key, default=None, required=False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(key, "missing required key")
    return default


def _get_float(cfg, key, default=None, required=False):
    v = _get(cfg, key, default, required)
    if v is None:
        return None
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(key, f"not a number: {v!r}")


def _get_int(cfg, key, default=None, required=False):
    v = _get(cfg, key, default, required)
    if v is None:
        return None
    try:
        return int(v)
    except (TypeError, ValueError):
        raise ConfigError(key, f"not an integer: {v!r}")


def _get_list(cfg, key, default=""):
    raw = str(_get(cfg, key, default) or "")
    if not raw:
        return []
    try:
        return [float(x) for x in raw.split(",")]
    except ValueError:
        raise ConfigError(key, f"not a comma-separated number list: {raw!r}")


def _get_int_list(cfg, key, default=""):
    return [int(x) for x in _get_list(cfg, key, default)]


def _wants_redundant_pcm(cfg) -> bool:
    # mirrors build_nms: dilation shifts imply the redundant matrix
    shifts = _get_int_list(cfg, "nms.shifts")
    return _get(cfg, "nms.pcm", "h_o" if shifts else "h") == "h_o"


def build_code(cfg) -> codes_mod.CodeSpec:
    name = _get(cfg, "code.name")
    pcm = _get(cfg, "code.pcm")
    if name is None and pcm is None:
        raise ConfigError("code.name", "set code.name or code.pcm")
    if pcm is not None:
        if not Path(pcm).exists():
            raise ConfigError("code.pcm", f"file not found: {pcm}")
        ho_path = _get(cfg, "code.pcm_redundant")
        if ho_path is not None and not Path(ho_path).exists():
            raise ConfigError("code.pcm_redundant", f"file not found: {ho_path}")
        n = _get_int(cfg, "code.n", required=True)
        k = _get_int(cfg, "code.k", required=True)
        code = codes_mod.from_alist_files(name or Path(pcm).stem, n, k, pcm,
                                          ho_path)
    else:
        try:
            code = codes_mod.by_name(name)
        except ValueError:
            raise ConfigError("code.name",
                              f"unknown code {name!r}; known: "
                              f"{codes_mod.known_codes()}")
    if code.h_o is None and _wants_redundant_pcm(cfg):
        i_r = _get_float(cfg, "code.i_r", 2.0)
        if i_r < 1.0:
            raise ConfigError("code.i_r", "must be >= 1")
        code = codes_mod.CodeSpec(code.name, code.n, code.k, code.h,
                                  h_o=build_redundant_pcm(code.h, i_r=i_r),
                                  g=code.g)
    return code


def build_nms(cfg) -> NmsParams:
    shifts = _get_int_list(cfg, "nms.shifts")
    autos = _get_int_list(cfg, "nms.autos")
    i_m = _get_int(cfg, "nms.i_m", 10)
    alpha_raw = _get_float(cfg, "nms.alpha_raw", 0.2)
    pcm_choice = _get(cfg, "nms.pcm", "h_o" if shifts else "h")
    try:
        return NmsParams(alpha_raw, i_m, shifts, autos, pcm_choice)
    except ValueError as e:
        raise ConfigError("nms.*", str(e))


def build_hybrid(cfg, code) -> tuple[HybridConfig, dict]:
    bundle_path = _get(cfg, "models.bundle")
    bundle = None
    hashes = {}
    nms = build_nms(cfg)
    if bundle_path:
        if not Path(bundle_path).exists():
            raise ConfigError("models.bundle", f"file not found: {bundle_path}")
        bundle = load_bundle(bundle_path)
        hashes["bundle"] = hashlib.sha256(Path(bundle_path).read_bytes()).hexdigest()
        if "nms.alpha_raw" not in cfg:
            nms = nms.with_alpha(bundle["alpha_raw"])
    try:
        gate = GateConfig(_get_float(cfg, "gate.m_g", -1.0),
                          _get_float(cfg, "osd.s_m", 1.0))
    except ValueError as e:
        raise ConfigError("gate.m_g/osd.s_m", str(e))
    mode_s = _get(cfg, "osd.mode", "off")
    if mode_s == "off":
        mode = OsdMode.off()
    elif mode_s == "order_p":
        mode = OsdMode.order_p(_get_int(cfg, "osd.p", required=True))
    elif mode_s == "path":
        mode = OsdMode.path(_get_int(cfg, "osd.b_s", 10),
                            _get_int(cfg, "osd.w_t", 5))
    else:
        raise ConfigError("osd.mode", f"unknown mode {mode_s!r}")
    path = None
    path_file = _get(cfg, "path.file")
    if path_file:
        if not Path(path_file).exists():
            raise ConfigError("path.file", f"file not found: {path_file}")
        buf = load_path_buffer(path_file)
        path = buf.current_path()
        hashes["path"] = hashlib.sha256(Path(path_file).read_bytes()).hexdigest()
    try:
        hc = HybridConfig(
            nms, gate, mode,
            dia=bundle["dia"] if bundle else None,
            ude=bundle["ude"] if bundle else None,
            swa=bundle["swa"] if bundle else None,
            path=path,
            dia_mode=_get(cfg, "dia.mode", "replace"),
            reliability_source=_get(cfg, "osd.reliability", "model"))
    except ValueError as e:
        raise ConfigError("config", str(e))
    return hc, hashes


def _complexity_for(code, cfg_map) -> ComplexityModel:
    d_v = float(np.mean(code.h.col_weights()))
    return ComplexityModel(code.n, code.k, d_v, q=_get_int(cfg_map, "q", 6))


def _train_cfg(cfg) -> TrainConfig:
    try:
        return TrainConfig(steps=_get_int(cfg, "train.steps", 2000),
                           lr0=_get_float(cfg, "train.lr0", 0.01),
                           decay=_get_float(cfg, "train.decay", 0.95),
                           decay_every=_get_int(cfg, "train.decay_every", 500),
                           batch=_get_int(cfg, "train.batch", 64),
                           seed=_get_int(cfg, "train.seed", 0))
    except ValueError as e:
        raise ConfigError("train.*", str(e))


def _gen_dataset(code, snr_db, frames, seed, tag):
    sigma2 = sigma_from_snr(snr_db, code.rate)
    rng = worker_stream(seed, tag)
    msgs = rng.integers(0, 2, size=(frames, code.k), dtype=np.int64)
    tx = ((msgs @ code.g.a.astype(np.int64)) & 1).astype(np.uint8)
    y = modulate(tx) + np.sqrt(sigma2) * rng.standard_normal((frames, code.n))
    return channel_llr(y, sigma2), tx


def _update_bundle(path, **changes):
    if Path(path).exists():
        cur = load_bundle(path)
    else:
        cur = {"alpha_raw": 0.2, "dia": None, "ude": None, "swa": None,
               "gate": None, "meta": {}}
    cur.update(changes)
    save_bundle(path, cur["alpha_raw"], dia=cur["dia"], ude=cur["ude"],
                swa=cur["swa"], gate=cur["gate"], meta=cur.get("meta") or None)


# ---------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args)
    code = build_code(cfg)
    hc, hashes = build_hybrid(cfg, code)
    snrs = _get_list(cfg, "sweep.snrs")
    if not snrs:
        raise ConfigError("sweep.snrs", "missing required key")
    seed = _get_int(cfg, "seed", 0)
    report = monte_carlo(code, snrs, hc,
                         min_errors=_get_int(cfg, "stop.min_errors", 100),
                         max_frames=_get_int(cfg, "stop.max_frames", 10 ** 5),
                         seed=seed, batch=_get_int(cfg, "batch", 512),
                         label=_get(cfg, "label", code.name))
    i_r = 1.0
    if hc.nms.dilated and code.h_o is not None:
        i_r = code.h_o.rows / code.h.rows
    attach_complexity(report, _complexity_for(code, cfg), hc, i_r=i_r)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_csv(report, out / "results.csv")
    plot_fer([(report.label, report)], out / "fer.svg")
    manifest = {
        "format": "nmsosd-manifest", "version": MANIFEST_VERSION,
        "config": cfg,
        "code": {"name": code.name, "n": code.n, "k": code.k,
                 "h_sha256": code.h.sha256(),
                 "h_o_sha256": code.h_o.sha256() if code.h_o is not None else None},
        "master_seed": seed,
        "streams": [[seed, si, "batch-indexed"] for si in range(len(snrs))],
        "hashes": hashes,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    for row in report.rows:
        lo, hi = row.fer_interval()
        print(f"snr={row.snr_db:g} frames={row.frames} fer={row.fer:.5g} "
              f"[{lo:.5g},{hi:.5g}] ber={row.ber:.5g} i_ai={row.i_ai:.3f} "
              f"rho={row.rho:.4f} i_at={row.i_at:.1f}")
    return 0


def cmd_replay(args) -> int:
    p = Path(args.manifest)
    if not p.exists():
        raise ConfigError("manifest", f"file not found: {p}")
    doc = json.loads(p.read_text())
    if doc.get("format") != "nmsosd-manifest":
        raise ConfigError("manifest", "not a run manifest")
    if doc.get("version") != MANIFEST_VERSION:
        raise ConfigError("manifest", f"unsupported version {doc.get('version')}")
    cfg = doc["config"]
    code = build_code(cfg)
    if code.h.sha256() != doc["code"]["h_sha256"]:
        raise ConfigError("code.pcm", "PCM hash differs from the manifest")
    args.set = [f"{k}={v}" for k, v in cfg.items()]
    args.config = None
    return cmd_simulate(args)


def cmd_train_alpha(args) -> int:
    cfg = load_config(args)
    code = build_code(cfg)
    nms = build_nms(cfg)
    snr = _get_float(cfg, "train.snr", required=True)
    frames = _get_int(cfg, "train.frames", 4096)
    sched = _train_cfg(cfg)
    dataset = _gen_dataset(code, snr, frames, sched.seed, 1)
    result = train_alpha(dataset, code, nms, sched)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle_path = _get(cfg, "models.bundle", str(out / "bundle.json"))
    _update_bundle(bundle_path, alpha_raw=result.alpha_raw)
    print(f"alpha_raw={result.alpha_raw!r} lr={result.lr} "
          f"val_fer={result.val_fer:.4f} bundle={bundle_path}")
    return 0


def cmd_collect(args) -> int:
    cfg = load_config(args)
    code = build_code(cfg)
    hc, _ = build_hybrid(cfg, code)
    snr = _get_float(cfg, "collect.snr", required=True)
    frames = _get_int(cfg, "collect.frames", 10 ** 4)
    rec = collect_failures(code, snr, frames, hc,
                           seed=_get_int(cfg, "seed", 0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dia_records(out / "dia_records.npz", rec.dia_posteriors, rec.dia_bits)
    save_ude_records(out / "ude_records.npz", rec.ude_d, rec.ude_labels)
    if rec.swa_windows.size:
        save_swa_records(out / "swa_records.npz", rec.swa_windows, rec.swa_gms,
                         rec.swa_labels)
    save_pattern_records(out / "pattern_records.npz", rec.patterns)
    print(f"frames={rec.frames_run} failures={rec.failures} "
          f"dia={rec.dia_posteriors.shape[0]} ude={rec.ude_d.shape[0]} "
          f"swa={rec.swa_windows.shape[0]} patterns={rec.patterns.shape[0]}")
    return 0


def cmd_train_dia(args) -> int:
    cfg = load_config(args)
    rec = load_records(_get(cfg, "records", required=True), "dia")
    sched = _train_cfg(cfg)
    i_m = rec["posteriors"].shape[1]
    model, info = dia_train(rec["posteriors"], rec["true_bits"], i_m, sched)
    bundle_path = _get(cfg, "models.bundle", required=True)
    _update_bundle(bundle_path, dia=model)
    print(f"samples={rec['posteriors'].shape[0]} best_val={info.best_val:.4f} "
          f"bundle={bundle_path}")
    return 0


def cmd_train_ude(args) -> int:
    cfg = load_config(args)
    rec = load_records(_get(cfg, "records", required=True), "ude")
    sched = _train_cfg(cfg)
    w = (_get_float(cfg, "train.w_accept", 1.0),
         _get_float(cfg, "train.w_reject", 1.0))
    model, info = ude_train(rec["d"], rec["labels"], sched, class_weight=w)
    bundle_path = _get(cfg, "models.bundle", required=True)
    _update_bundle(bundle_path, ude=model)
    print(f"samples={rec['d'].shape[0]} best_val={info.best_val:.4f} "
          f"bundle={bundle_path}")
    return 0


def cmd_train_swa(args) -> int:
    cfg = load_config(args)
    rec = load_records(_get(cfg, "records", required=True), "swa")
    sched = _train_cfg(cfg)
    w = (_get_float(cfg, "train.w_stop", 1.0),
         _get_float(cfg, "train.w_continue", 1.0))
    model, info = swa_train(rec["windows"], rec["g_ms"], rec["labels"], sched,
                            class_weight=w)
    bundle_path = _get(cfg, "models.bundle", required=True)
    _update_bundle(bundle_path, swa=model)
    print(f"samples={rec['windows'].shape[0]} best_val={info.best_val:.4f} "
          f"bundle={bundle_path}")
    return 0


def cmd_build_path(args) -> int:
    cfg = load_config(args)
    code = build_code(cfg)
    snr = _get_float(cfg, "path.snr", required=True)
    l_t = _get_int(cfg, "osd.l_t", required=True)
    beta = _get_float(cfg, "osd.beta", 2.0)
    p_max = _get_int(cfg, "path.p_max", 4)
    samples = _get_int(cfg, "path.samples", 10 ** 6)
    lv = estimate_lambda(code.n, snr, code.rate, samples=samples,
                         seed=_get_int(cfg, "seed", 0))
    teps = almlt_order(lv.mrb(code.k), p_max, int(round(beta * l_t)))
    try:
        buf = PathBuffer(teps, l_t, beta)
    except ValueError as e:
        raise ConfigError("osd.l_t/path.p_max", str(e))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path_file = _get(cfg, "path.file", str(out / "path.csv"))
    save_path_buffer(path_file, buf, meta={"code": code.name, "snr_db": snr,
                                           "p_max": p_max,
                                           "seed": _get_int(cfg, "seed", 0)})
    print(f"buffer={buf.size} l_t={l_t} file={path_file}")
    return 0


def cmd_update_path(args) -> int:
    cfg = load_config(args)
    path_file = _get(cfg, "path.file", required=True)
    if not Path(path_file).exists():
        raise ConfigError("path.file", f"file not found: {path_file}")
    buf = load_path_buffer(path_file)
    rec = load_records(_get(cfg, "records", required=True), "patterns")
    observed = [tuple(np.flatnonzero(row)) for row in rec["masks"]]
    matched = buf.update_with_batch(observed)
    save_path_buffer(path_file, buf)
    print(f"observed={len(observed)} matched={matched} "
          f"batches={buf.batch_count} file={path_file}")
    return 0


def cmd_complexity(args) -> int:
    cfg = load_config(args)
    code = build_code(cfg)
    cm = _complexity_for(code, cfg)
    i_ai = _get_float(cfg, "stats.i_ai", required=True)
    i_at = _get_float(cfg, "stats.i_at", 0.0)
    rho = _get_float(cfg, "stats.rho", 0.0)
    nms = build_nms(cfg)
    i_r = 1.0
    if nms.dilated and code.h_o is not None:
        i_r = code.h_o.rows / code.h.rows
    table = cm.hybrid(i_ai, i_at, rho, i_s=nms.i_s if nms.dilated else 1,
                      i_r=i_r if nms.dilated else 1.0, i_m=nms.i_m,
                      w_t=_get_int(cfg, "osd.w_t", 5),
                      with_dia=bool(_get_int(cfg, "stats.with_dia", 0)),
                      with_ude=bool(_get_int(cfg, "stats.with_ude", 0)),
                      swa_calls=_get_float(cfg, "stats.swa_calls", 0.0))
    for key, val in table.items():
        print(f"{key}={val:.1f}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "train-alpha": cmd_train_alpha,
    "collect": cmd_collect,
    "train-dia": cmd_train_dia,
    "train-ude": cmd_train_ude,
    "train-swa": cmd_train_swa,
    "build-path": cmd_build_path,
    "update-path": cmd_update_path,
    "complexity": cmd_complexity,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nmsosd",
                                     description="hybrid NMS-OSD workbench")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key")
        sp.add_argument("--out", default=".", help="output directory")
        if name == "replay":
            sp.add_argument("--manifest", required=True)
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
