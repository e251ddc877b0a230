########################################################################
# Copyright (c) 2024 Contributors to the Eclipse Foundation
#
# See the NOTICE file(s) distributed with this work for additional
# information regarding copyright ownership.
#
# This program and the accompanying materials are made available under the
# terms of the Apache License 2.0 which is available at
# http://www.apache.org/licenses/LICENSE-2.0
#
# SPDX-License-Identifier: Apache-2.0
########################################################################

import csv
import json
import logging
import os
import sys

import pytest

import wtbcpolar

test_path = os.path.dirname(os.path.abspath(__file__))
models_path = os.path.normpath(test_path + "/../../models")


@pytest.fixture
def change_test_dir(request, monkeypatch):
    # To make sure we run from test directory
    monkeypatch.chdir(request.fspath.dirname)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    # No config/wtbc_polar.ini below the working directory
    monkeypatch.chdir(tmp_path)
    for name in ("WTBC_SEED", "WTBC_RELAX", "WTBC_CHAIN_KEYS", "WTBC_N", "WTBC_BLOCKS", "WTBC_METHOD",
                 "WTBC_SAMPLES", "WTBC_OUT", "WTBC_MODEL", "WTBC_CORNER", "WTBC_TRIALS"):
        monkeypatch.delenv(name, raising=False)
    return tmp_path


def run(*args) -> int:
    return wtbcpolar.main(["wtbcpolar.py", *args])


def read_json(path):
    with open(path, encoding="utf-8") as report_file:
        return json.load(report_file)


def test_region_report(workdir):
    assert run("region", "--model", models_path + "/bec_triple.yaml", "--out", "out") == 0

    region = read_json(workdir / "out" / "region.json")
    assert region["format"] == "wtbc-region"
    assert region["situation"] == "S1"
    assert not region["receivers_swapped"]
    assert region["corner_points"]["k=1"]["in_region"]
    assert region["corner_points"]["k=1"]["rates"]["R_S1"] == pytest.approx(0.2)
    assert region["time_share"]["alpha"] == 0.5
    manifest = read_json(workdir / "out" / "manifest.json")
    assert manifest["subcommand"] == "region"
    assert manifest["config"] is None


def test_sets_report(workdir):
    assert run("sets", "--model", models_path + "/bec_triple.yaml", "--n", "8", "--out", "out") == 0

    plan = read_json(workdir / "out" / "plan.json")
    assert plan["corner"] == 1
    assert plan["inner"]["case"] == "A"
    assert "V|Z" in read_json(workdir / "out" / "profiles.json")


def test_simulate_writes_json_and_csv(workdir):
    assert run("simulate", "--model", models_path + "/noiseless.json", "--n", "8", "--blocks", "2",
               "--trials", "5", "--relax", "--out", "out") == 0

    report = read_json(workdir / "out" / "simulate.json")
    assert report["format"] == "wtbc-simulation"
    assert report["reports"][0]["errors"] == {"rx1": 0, "rx2": 0}
    with open(workdir / "out" / "simulate.csv", encoding="utf-8") as csv_file:
        rows = list(csv.DictReader(csv_file))
    assert len(rows) == 1
    assert rows[0]["trials"] == "5"


def test_simulate_long_erasure_code(workdir):
    assert run("simulate", "--model", models_path + "/bec_triple.yaml", "--n", "128", "--method", "de",
               "--blocks", "2", "--trials", "2", "--out", "strict") == 3
    assert read_json(workdir / "strict" / "error.json")["error"] == "InadmissibleCombination"

    assert run("simulate", "--model", models_path + "/bec_triple.yaml", "--n", "128", "--method", "de",
               "--blocks", "2", "--trials", "2", "--relax", "--out", "out") == 0
    report = read_json(workdir / "out" / "simulate.json")["reports"][0]
    assert report["n"] == 128
    assert report["overhead"]["relax_lost_positions"] > 0


def test_zero_trials_is_a_validation_error(workdir):
    assert run("simulate", "--model", models_path + "/noiseless.json", "--trials", "0", "--out", "out") == 2

    error = read_json(workdir / "out" / "error.json")
    assert error["error"] == "ValidationError"
    assert error["exit_code"] == 2


def test_verify_toy_code(workdir):
    assert run("verify", "--model", models_path + "/bec_toy.yaml", "--out", "out") == 0

    report = read_json(workdir / "out" / "verify.json")
    assert report["format"] == "wtbc-verification"
    assert (report["n"], report["blocks"]) == (2, 2)
    assert report["tv"] == pytest.approx(0.0, abs=1e-12)
    assert report["leakage"] == pytest.approx(0.18, abs=1e-9)
    assert report["delta_star_n"] > 0.0
    assert report["delta_secrecy_n"] > 0.0


def test_rates_sweep(workdir):
    assert run("rates", "--model", models_path + "/bec_triple.yaml", "--sweep-n", "8",
               "--sweep-blocks", "1,2", "--out", "out") == 0

    with open(workdir / "out" / "rates.csv", encoding="utf-8") as csv_file:
        rows = list(csv.DictReader(csv_file))
    assert [row["blocks"] for row in rows] == ["1", "2"]
    assert tuple(rows[0]) == wtbcpolar.RATES_FIELDS
    rates = read_json(workdir / "out" / "rates.json")
    assert rates["corner_point"]["R_S1"] == pytest.approx(0.2)


def test_infeasible_plan_exit_code(workdir):
    def rows(e):
        return [[1.0 - e, 0.0, e], [0.0, 1.0 - e, e]]

    model = {
        "name": "wide_gap",
        "alphabets": {"Y1": 3, "Y2": 3, "Z": 3},
        "p_vu1u2": [[[0.5, 0.0], [0.0, 0.0]], [[0.5, 0.0], [0.0, 0.0]]],
        "f_table": [[[0, 0], [0, 0]], [[1, 1], [1, 1]]],
        "channel": {"y1": rows(0.5), "y2": rows(0.2), "z": rows(0.6)},
    }
    with open(workdir / "wide_gap.json", "w", encoding="utf-8") as model_file:
        json.dump(model, model_file)

    # The confidential bits of C1 have nowhere to go without relaxation
    assert run("sets", "--model", "wide_gap.json", "--n", "8", "--out", "out") == 3
    assert read_json(workdir / "out" / "error.json")["exit_code"] == 3

    assert run("sets", "--model", "wide_gap.json", "--n", "8", "--relax", "--out", "relaxed") == 0


def test_option_precedence(workdir, monkeypatch, caplog: pytest.LogCaptureFixture):
    caplog.set_level(logging.INFO)
    with open(workdir / "run.ini", "w", encoding="utf-8") as ini:
        ini.write("[general]\nmodel = {}\nout = from_ini\n[code]\nn = 8\nblocks = 1\n"
                  "[simulate]\ntrials = 4\n".format(models_path + "/noiseless.json"))

    # INI only
    assert run("simulate", "--config", "run.ini") == 0
    assert read_json(workdir / "from_ini" / "manifest.json")["trials"] == 4

    # Environment over INI
    monkeypatch.setenv("WTBC_TRIALS", "3")
    assert run("simulate", "--config", "run.ini") == 0
    assert read_json(workdir / "from_ini" / "manifest.json")["trials"] == 3

    # Command line over environment
    assert run("simulate", "--config", "run.ini", "--trials", "2") == 0
    manifest = read_json(workdir / "from_ini" / "manifest.json")
    assert manifest["trials"] == 2
    assert manifest["code"]["n"] == 8
    assert manifest["config"] == "run.ini"
    assert ("wtbcpolar", logging.INFO, "Using trials: 2") in caplog.record_tuples
    assert ("wtbcpolar", logging.INFO, "Using sweep n: ()") in caplog.record_tuples


def test_invalid_environment_value(workdir, monkeypatch):
    monkeypatch.setenv("WTBC_N", "eight")
    assert run("region", "--model", models_path + "/bec_triple.yaml", "--out", "out") == 2
    assert "Invalid value for n" in read_json(workdir / "out" / "error.json")["message"]


def test_missing_config_file(workdir):
    assert run("region", "--config", "nowhere.ini", "--model", models_path + "/bec_triple.yaml",
               "--out", "out") == 2
    assert read_json(workdir / "out" / "error.json")["error"] == "FileNotFoundError"


def test_missing_model_file(workdir):
    assert run("region", "--model", "nowhere.yaml", "--out", "out") == 2
    assert read_json(workdir / "out" / "error.json")["exit_code"] == 2


def test_model_is_required(workdir):
    assert run("region", "--out", "out") == 2
    assert read_json(workdir / "out" / "error.json")["message"] == "No model file given"


@pytest.mark.parametrize("subcommand, ok_expected", [
    ('region', True),
    ('verify', True),
    ('REGION', False),
    ('decode', False)])
def test_subcommand_choices(subcommand, ok_expected, change_test_dir):
    test_str = sys.executable + " ../../wtbcpolar.py " + subcommand + "  --help > out.txt 2>&1"
    result = os.system(test_str)
    assert os.WIFEXITED(result)
    if ok_expected:
        assert os.WEXITSTATUS(result) == 0
        test_str = r'grep "\-\-sweep-blocks LIST" out.txt > /dev/null'
    else:
        assert os.WEXITSTATUS(result) != 0
        test_str = r'grep "invalid choice" out.txt > /dev/null'

    result = os.system(test_str)
    os.system("cat out.txt")
    os.system("rm -f out.txt")
    assert os.WIFEXITED(result)
    assert os.WEXITSTATUS(result) == 0


def test_dispatch_manifest(workdir):
    manifest = wtbcpolar.RunManifest(subcommand="sets", config_path=None, out=str(workdir / "direct"), seed=1,
                                     relax=False, model=models_path + "/bec_triple.yaml",
                                     code=wtbcpolar.CodeConfig(n=8, seed=1))

    assert wtbcpolar.dispatch(manifest) == 0
    assert read_json(workdir / "direct" / "manifest.json") == json.loads(json.dumps(manifest.to_dict()))
    assert (workdir / "direct" / "plan.json").exists()


def test_dispatch_rejects_bad_corner(workdir):
    manifest = wtbcpolar.RunManifest(subcommand="region", config_path=None, out="out", seed=0, relax=False,
                                     model=models_path + "/bec_triple.yaml", corner=3)
    with pytest.raises(wtbcpolar.ValidationError):
        wtbcpolar.dispatch(manifest)
