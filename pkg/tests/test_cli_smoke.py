import os
import subprocess
import sys
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[1]


def test_scripts_compile():
    result = subprocess.run(
        [
            sys.executable,
            "-m",
            "py_compile",
            "run_mec.py",
        ],
        capture_output=True,
        text=True,
        cwd=REPO_ROOT,
    )
    assert result.returncode == 0, result.stderr


def test_expected_cli_flags_present():
    script_flags = {
        "run_mec.py": [
            "--seed", "--scenario", "--out", "--pricing-mode", "--format", "--timing",
            "--level", "--method", "--report-out", "--detail-out", "--with-demands",
        ],
    }

    for script_name, flags in script_flags.items():
        text = (REPO_ROOT / script_name).read_text(encoding="utf-8")
        for flag in flags:
            assert flag in text, f"Missing {flag} in {script_name}"


def _run(*args, cwd):
    return subprocess.run(
        [sys.executable, str(REPO_ROOT / "run_mec.py"), *args],
        capture_output=True,
        text=True,
        cwd=cwd,
        env={**os.environ, "PYTHONPATH": str(REPO_ROOT)},
    )


def test_gen_auction_round_trip(tmp_path):
    scenario = tmp_path / "scenario.json"
    gen = _run("gen", "--n-users", "12", "--n-stations", "2", "--n-clouds", "1", "--seed", "4",
               "--with-demands", "--out", str(scenario), cwd=tmp_path)
    assert gen.returncode == 0, gen.stderr
    assert "Saved scenario with 12 users" in gen.stdout

    allocation = tmp_path / "allocation.json"
    auction = _run("auction", "--scenario", str(scenario), "--out", str(allocation), cwd=tmp_path)
    assert auction.returncode == 0, auction.stderr
    assert '"pricing_mode": "definitional"' in allocation.read_text(encoding="utf-8")


def test_invalid_input_exits_with_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 99}', encoding="utf-8")
    result = _run("auction", "--scenario", str(bad), cwd=tmp_path)
    assert result.returncode == 2
    assert "error:" in result.stderr

    missing = _run("oracle", "--scenario", str(tmp_path / "missing.json"), cwd=tmp_path)
    assert missing.returncode == 2


def test_repeated_runs_are_byte_identical(tmp_path):
    outputs = []
    for name in ("first", "second"):
        run_dir = tmp_path / name
        run_dir.mkdir()
        gen = _run("gen", "--n-users", "10", "--n-stations", "2", "--n-clouds", "1", "--seed", "9",
                   "--with-demands", "--out", "scenario.json", cwd=run_dir)
        assert gen.returncode == 0, gen.stderr
        oracle = _run("oracle", "--scenario", "scenario.json", "--method", "ce", "--seed", "9",
                      "--out", "oracle.json", cwd=run_dir)
        assert oracle.returncode == 0, oracle.stderr
        outputs.append([(run_dir / f).read_bytes() for f in ("scenario.json", "oracle.json")])
    assert outputs[0] == outputs[1]
