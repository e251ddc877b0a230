#!/usr/bin/env python

########################################################################
# Copyright (c) 2024 Contributors to the Eclipse Foundation
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
# SPDX-License-Identifier: Apache-2.0
########################################################################

"""
Batch front end for polar codes on the wiretap broadcast channel.

Subcommands:
  region    region bounds and corner points of a model
  sets      entropy profiles, index sets and chaining plans
  simulate  end-to-end reliability trials
  verify    exact total variation and leakage of a small code
  rates     achieved rates against the corner point over a sweep of n or L
"""

import argparse
import configparser
import csv
import dataclasses
import errno
import io
import json
import logging
import os
import sys

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

from kuksa_client.kuksa_logger import KuksaLogger  # type: ignore

from wtbcpolarlib.analysis import (bound_report, corner_point, empirical_rates, exact_leakage, exact_tv,
                                   in_region, region_bounds, time_share)
from wtbcpolarlib.chainingcodec import compile_layout
from wtbcpolarlib.channelsim import ExperimentConfig, reports_to_csv, run_trials
from wtbcpolarlib.dmsmodel import (JointModel, check_marton_feasibility, classify_situation,
                                   information_quantities, load_model_file)
from wtbcpolarlib.errors import EXIT_OK, EXIT_VALIDATION, ValidationError, WtbcError
from wtbcpolarlib.polarcore import CodeConfig
from wtbcpolarlib.setbuilder import design_code

log = logging.getLogger("wtbcpolar")

SUBCOMMANDS = ("region", "sets", "simulate", "verify", "rates")

CONFIG_SECTION_GENERAL = "general"
CONFIG_SECTION_CODE = "code"

DEFAULT_OUT = "out"
REPORT_VERSION = 1

# Built-in defaults that differ per subcommand, below the INI file in precedence
SUBCOMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "verify": {"n": 2, "blocks": 2},
}


@dataclass(frozen=True)
class RunManifest:
    """Everything one run needs; identical manifests give identical reports"""

    subcommand: str
    config_path: Optional[str]
    out: str
    seed: int
    relax: bool
    model: str = ""
    corner: int = 1
    code: CodeConfig = field(default_factory=CodeConfig)
    trials: int = 100
    alpha: float = 0.5
    sweep_n: Tuple[int, ...] = ()
    sweep_blocks: Tuple[int, ...] = ()

    def validate(self) -> "RunManifest":
        if self.subcommand not in SUBCOMMANDS:
            raise ValidationError(f"Unknown subcommand {self.subcommand}, expected one of {SUBCOMMANDS}")
        if self.corner not in (1, 2):
            raise ValidationError(f"Corner must be 1 or 2, got {self.corner}")
        if not self.model:
            log.error("No model file given, use --model, WTBC_MODEL or the [general] model option")
            raise ValidationError("No model file given")
        for value in self.sweep_n + self.sweep_blocks:
            if value < 1:
                raise ValidationError(f"Sweep values must be positive, got {value}")
        self.code.validate()
        os.makedirs(self.out, exist_ok=True)
        if not os.access(self.out, os.W_OK):
            log.error("Output directory %s is not writable", self.out)
            raise ValidationError(f"Output directory {self.out} is not writable")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subcommand": self.subcommand,
            "config": self.config_path,
            "out": self.out,
            "seed": self.seed,
            "relax": self.relax,
            "model": self.model,
            "corner": self.corner,
            "code": dataclasses.asdict(self.code),
            "trials": self.trials,
            "alpha": self.alpha,
            "sweep_n": list(self.sweep_n),
            "sweep_blocks": list(self.sweep_blocks),
        }


def _parse_config(filename: Optional[str]) -> Tuple[configparser.ConfigParser, Optional[str]]:
    configfile = None

    if filename:
        if not os.path.exists(filename):
            log.warning("Couldn't find config file %s", filename)
            raise FileNotFoundError(errno.ENOENT, os.strerror(errno.ENOENT), filename)
        configfile = filename
    else:
        config_candidates = [
            "/config/wtbc_polar.ini",
            "/etc/wtbc_polar.ini",
            "config/wtbc_polar.ini",
        ]
        for candidate in config_candidates:
            if os.path.isfile(candidate):
                configfile = candidate
                break

    config = configparser.ConfigParser()
    log.info("Reading configuration from file: %s", configfile)
    if configfile:
        readed = config.read(configfile)
        if log.isEnabledFor(logging.DEBUG):
            log.debug("using configuration (%s):\n%s", readed, {s: dict(config[s]) for s in config.sections()})

    return config, configfile


def _to_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "yes", "true", "on"):
        return True
    if lowered in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {value}")


def _to_int_list(value: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in value.split(",") if part.strip())


def _option(name: str, cli_value: Any, env_name: Optional[str], config: configparser.ConfigParser,
            sections: Tuple[str, ...], default: Any, convert: Callable[[str], Any]) -> Any:
    """Resolve one option: command line, then environment, then INI sections in order, then default"""
    try:
        if cli_value is not None:
            value = cli_value
        elif env_name and os.environ.get(env_name):
            value = convert(os.environ[env_name])
        else:
            value = default
            for section in sections:
                if config.has_option(section, name):
                    value = convert(config.get(section, name))
                    break
    except ValueError as exc:
        log.error("Invalid value for %s: %s", name, exc)
        raise ValidationError(f"Invalid value for {name}: {exc}") from exc
    log.info("Using %s: %s", name.replace("_", " "), value)
    return value


def _build_manifest(args: argparse.Namespace, config: configparser.ConfigParser,
                    configfile: Optional[str]) -> RunManifest:
    subcommand = args.subcommand
    sections = (subcommand, CONFIG_SECTION_CODE, CONFIG_SECTION_GENERAL)
    defaults = {**dataclasses.asdict(CodeConfig()), **SUBCOMMAND_DEFAULTS.get(subcommand, {})}

    def option(name, cli_value, env_name, default, convert):
        return _option(name, cli_value, env_name, config, sections, default, convert)

    seed = option("seed", args.seed, "WTBC_SEED", 0, int)
    relax = option("relax", True if args.relax else None, "WTBC_RELAX", False, _to_bool)
    chain_keys = option("chain_keys", False if args.no_chain_keys else None, "WTBC_CHAIN_KEYS",
                        True, _to_bool)
    code = CodeConfig(
        n=option("n", args.n, "WTBC_N", defaults["n"], int),
        beta=option("beta", args.beta, None, defaults["beta"], float),
        blocks=option("blocks", args.blocks, "WTBC_BLOCKS", defaults["blocks"], int),
        method=option("method", args.method, "WTBC_METHOD", defaults["method"], str),
        samples=option("samples", args.samples, "WTBC_SAMPLES", defaults["samples"], int),
        seed=seed,
        exact_cap=option("exact_cap", args.exact_cap, None, defaults["exact_cap"], int),
        bins=option("bins", args.bins, None, defaults["bins"], int),
        chain_keys=chain_keys,
        relax=relax,
    )
    return RunManifest(
        subcommand=subcommand,
        config_path=configfile,
        out=option("out", args.out, "WTBC_OUT", DEFAULT_OUT, str),
        seed=seed,
        relax=relax,
        model=option("model", args.model, "WTBC_MODEL", "", str),
        corner=option("corner", args.corner, "WTBC_CORNER", 1, int),
        code=code,
        trials=option("trials", args.trials, "WTBC_TRIALS", 100, int),
        alpha=option("alpha", args.alpha, None, 0.5, float),
        sweep_n=option("sweep_n", _cli_list(args.sweep_n), None, (), _to_int_list),
        sweep_blocks=option("sweep_blocks", _cli_list(args.sweep_blocks), None, (), _to_int_list),
    )


def _cli_list(value: Optional[str]) -> Optional[Tuple[int, ...]]:
    if value is None:
        return None
    try:
        return _to_int_list(value)
    except ValueError as exc:
        raise ValidationError(f"Not a comma separated list of integers: {value}") from exc


def _write(manifest: RunManifest, name: str, text: str):
    path = os.path.join(manifest.out, name)
    with open(path, "w", encoding="utf-8") as report_file:
        report_file.write(text)
    log.info("Wrote %s", path)


def _dump(record: Any) -> str:
    return json.dumps(record, indent=2, sort_keys=True) + "\n"


def _sweep(manifest: RunManifest):
    for n in manifest.sweep_n or (manifest.code.n,):
        for blocks in manifest.sweep_blocks or (manifest.code.blocks,):
            yield dataclasses.replace(manifest.code, n=n, blocks=blocks)


def _run_region(manifest: RunManifest, model: JointModel):
    report = information_quantities(model)
    situation = classify_situation(report)
    corners = {k: corner_point(report, k) for k in (1, 2)}
    record = {
        "format": "wtbc-region",
        "version": REPORT_VERSION,
        "model": model.name,
        "information": report.as_dict(),
        "situation": situation.name,
        "receivers_swapped": situation.swapped,
        "marton_feasible": check_marton_feasibility(report),
        "bounds": region_bounds(report).as_dict(),
        "corner_points": {f"k={k}": {"rates": rates.as_dict(), "in_region": in_region(rates, report, k)}
                          for k, rates in corners.items()},
        "time_share": {"alpha": manifest.alpha,
                       "rates": time_share(corners[1], corners[2], manifest.alpha).as_dict()},
    }
    _write(manifest, "region.json", _dump(record))


def _run_sets(manifest: RunManifest, model: JointModel):
    design = design_code(model, manifest.code, manifest.corner)
    profiles = {tag: json.loads(profile.to_text()) for tag, profile in sorted(design.profiles.items())}
    _write(manifest, "profiles.json", _dump(profiles))
    _write(manifest, "plan.json", design.to_text() + "\n")


def _run_simulate(manifest: RunManifest, model: JointModel):
    reports = []
    for code in _sweep(manifest):
        experiment = ExperimentConfig(model_path=manifest.model, code=code, corner=manifest.corner,
                                      trials=manifest.trials, seed=manifest.seed, model=model)
        reports.append(run_trials(experiment))
    record = {"format": "wtbc-simulation", "version": REPORT_VERSION,
              "reports": [report.to_dict() for report in reports]}
    _write(manifest, "simulate.json", _dump(record))
    _write(manifest, "simulate.csv", reports_to_csv(reports))


def _run_verify(manifest: RunManifest, model: JointModel):
    design = design_code(model, manifest.code, manifest.corner)
    layout = compile_layout(design)
    tv = exact_tv(design, layout)
    leakage = exact_leakage(design, layout)
    bounds = bound_report(layout.n, manifest.code.beta, layout.blocks)
    record = {
        "format": "wtbc-verification",
        "version": REPORT_VERSION,
        "model": model.name,
        "corner": manifest.corner,
        "n": layout.n,
        "blocks": layout.blocks,
        "case": design.case.label.value,
        "tv": tv.tv,
        "leakage": leakage.leakage,
        "delta_star_n": bounds.delta_star,
        "delta_secrecy_n": bounds.delta_secrecy,
        "tv_report": tv.as_dict(),
        "leakage_report": leakage.as_dict(),
    }
    _write(manifest, "verify.json", _dump(record))


RATES_FIELDS = ("n", "blocks", "case", "R_S1", "R_S2", "R_W1", "R_W2",
                "gap_R_S1", "gap_R_S2", "gap_R_W1", "gap_R_W2", "key_total", "key_fixed")


def _run_rates(manifest: RunManifest, model: JointModel):
    target = corner_point(information_quantities(model), manifest.corner)
    rows = []
    ledgers = []
    for code in _sweep(manifest):
        design = design_code(model, code, manifest.corner)
        layout = compile_layout(design)
        rates, ledger = empirical_rates(design, layout)
        row: Dict[str, Any] = {"n": code.n, "blocks": code.blocks, "case": design.case.label.value}
        row.update(rates.as_dict())
        row.update({f"gap_{name}": gap for name, gap in rates.distance(target).items()})
        row.update({"key_total": ledger["key_total"], "key_fixed": ledger["key_fixed"]})
        rows.append(row)
        ledgers.append({"n": code.n, "blocks": code.blocks, **ledger})

    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=RATES_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _write(manifest, "rates.csv", out.getvalue())
    _write(manifest, "rates.json", _dump({"format": "wtbc-rates", "version": REPORT_VERSION, "model": model.name,
                                         "corner": manifest.corner, "corner_point": target.as_dict(),
                                         "rows": rows, "overhead": ledgers}))


RUNNERS = {
    "region": _run_region,
    "sets": _run_sets,
    "simulate": _run_simulate,
    "verify": _run_verify,
    "rates": _run_rates,
}


def dispatch(manifest: RunManifest) -> int:
    """Run one subcommand and write its artifacts to the output directory"""
    manifest.validate()
    _write(manifest, "manifest.json", _dump(manifest.to_dict()))
    model = load_model_file(manifest.model)
    log.info("Running %s", manifest.subcommand)
    RUNNERS[manifest.subcommand](manifest, model)
    return EXIT_OK


def _write_error(out: str, record: Dict[str, Any]):
    try:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "error.json"), "w", encoding="utf-8") as error_file:
            error_file.write(_dump(record))
    except OSError as exc:
        log.warning("Could not write error record to %s: %s", out, exc)


def _get_command_line_args_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="wtbcpolar")
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="What to compute")
    parser.add_argument("--config", metavar="FILE", help="The file to read configuration properties from")
    parser.add_argument("--out", metavar="DIR", help="Directory the reports are written to")
    parser.add_argument("--model", metavar="FILE", help="JSON or YAML file describing the joint model")
    parser.add_argument("--seed", type=int, help="Seed all random streams are derived from")
    parser.add_argument("--corner", type=int, choices=(1, 2), help="Receiver served first")
    parser.add_argument("--relax", action="store_true",
                        help="Freeze bits that cannot be chained at finite n instead of failing")
    parser.add_argument("--method", choices=("exact", "mc", "de"), help="How entropy profiles are computed")
    parser.add_argument("--samples", type=int, metavar="N", help="Monte-Carlo samples per profile")
    parser.add_argument("--n", type=int, help="Block length, a power of two")
    parser.add_argument("--beta", type=float, help="Polarization exponent in (0, 0.5)")
    parser.add_argument("--blocks", type=int, metavar="L", help="Number of chained blocks")
    parser.add_argument("--exact-cap", type=int, help="Largest state space the exact methods enumerate")
    parser.add_argument("--bins", type=int, help="Quantization bins of the density evolution method")
    parser.add_argument("--trials", type=int, help="Number of simulation trials")
    parser.add_argument("--alpha", type=float, help="Time-sharing weight of corner 1 in the region report")
    parser.add_argument("--no-chain-keys", action="store_true",
                        help="Replace the chaining keys by zeros")
    parser.add_argument("--sweep-n", metavar="LIST", help="Comma separated block lengths to sweep")
    parser.add_argument("--sweep-blocks", metavar="LIST", help="Comma separated block counts to sweep")

    return parser


def main(argv):
    """Main entrypoint for wtbcpolar"""
    parser = _get_command_line_args_parser()
    args = parser.parse_args(argv[1:])
    out = args.out or os.environ.get("WTBC_OUT") or DEFAULT_OUT

    try:
        config, configfile = _parse_config(args.config)
        manifest = _build_manifest(args, config, configfile)
        out = manifest.out
        return dispatch(manifest)
    except WtbcError as error:
        log.error("%s: %s", type(error).__name__, error.message)
        _write_error(out, error.to_record())
        return error.exit_code
    except OSError as error:
        log.error("%s", error)
        _write_error(out, {"error": type(error).__name__, "message": str(error), "exit_code": EXIT_VALIDATION})
        return EXIT_VALIDATION


if __name__ == "__main__":
    # Example
    #
    # Set log level to debug
    #   LOG_LEVEL=debug ./wtbcpolar.py region --model models/bec_triple.yaml
    #
    # Set log level to INFO, but for wtbcpolarlib.setbuilder set it to DEBUG
    #   LOG_LEVEL=info,wtbcpolarlib.setbuilder=debug ./wtbcpolar.py sets --model models/bec_triple.yaml
    #
    # Other available loggers:
    #   wtbcpolar (main wtbcpolar file)
    #   wtbcpolarlib.* (Every file have their own logger, like wtbcpolarlib.chainingcodec)
    #

    kuksa_logger = KuksaLogger()
    kuksa_logger.init_logging()

    sys.exit(main(sys.argv))
