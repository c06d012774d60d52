"""End-to-end conformance: the adapter must satisfy the engine's protocol checker."""
import subprocess
import sys

import pytest


@pytest.mark.slow
def test_protocol_check_passes(asset_root):
    endpoint = f"{sys.executable} -m cir_adapter --asset-root {asset_root}"
    proc = subprocess.run(
        ["cirfocus", "protocol-check", "--endpoint", endpoint],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "PASS (6/6 checks)" in proc.stdout


def test_module_entrypoint_serves_a_request(asset_root):
    import json

    from conftest import score_request

    proc = subprocess.run(
        [sys.executable, "-m", "cir_adapter", "--asset-root", str(asset_root)],
        input=json.dumps(score_request()) + "\n",
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == 0, proc.stderr
    reply = json.loads(proc.stdout.splitlines()[0])
    assert reply["type"] == "scores" and len(reply["scores"]) == 2
