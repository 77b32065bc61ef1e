import struct
import time
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"


def smf(tracks, fmt=None, division=480):
    """Assemble SMF bytes from raw MTrk bodies."""
    if fmt is None:
        fmt = 0 if len(tracks) == 1 else 1
    out = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), division)
    for body in tracks:
        out += b"MTrk" + struct.pack(">I", len(body)) + body
    return out


EOT = bytes.fromhex("00 ff 2f 00")

# Note-On C4 vel 64 at 0, Note-Off at 480 (delta 0x83 0x60)
SINGLE_NOTE = smf([bytes.fromhex("00 90 3c 40  83 60 80 3c 40") + EOT])

EMPTY_TRACK = smf([EOT])

# Note-On 60 then running-status Note-On 60 vel 0 at tick 240 (delta 0x81 0x70)
RUNNING_STATUS_VEL0 = smf([bytes.fromhex("00 90 3c 40  81 70 3c 00") + EOT])

# conductor track (tempo + time signature), a melody using running status
# throughout, and a second track on channel 1 with an explicit 0x80 off
MULTI_TRACK = smf([
    bytes.fromhex("00 ff 51 03 07 a1 20  00 ff 58 04 04 02 18 08") + EOT,
    bytes.fromhex(
        "00 c0 00"              # program change (1 data byte)
        "00 90 3c 50"           # 60 on @0
        "83 60 3c 00"           # 60 off @480 (running status, vel 0)
        "00 3e 50"              # 62 on @480
        "83 60 3e 00"           # 62 off @960
        "00 40 50"              # 64 on @960
        "00 b0 07 64"           # controller, changes running status
        "87 40 90 40 00"        # 64 off @1920
    ) + EOT,
    bytes.fromhex("00 91 30 40  8f 00 81 30 00  00 91 37 40  81 70 81 37 00") + EOT,
])

MULTI_TRACK_EXPECTED = [
    [],
    [(60, 0, 480), (62, 480, 480), (64, 960, 960)],
    [(48, 0, 1920), (55, 1920, 240)],
]


@pytest.fixture
def data_dir():
    return DATA


def run_pipeline(root, seed=0, epochs=3):
    """ingest -> build x3 -> train x3 -> project 2D/3D -> neighbors, via the CLI entry point."""
    from notevec.cli import main

    root.mkdir(parents=True, exist_ok=True)
    assert main(["ingest", str(DATA / "midi"), "--out", str(root)]) == 0
    for variant in ("control", "db12", "interval"):
        assert main(["build", str(root / "pieces.txt"), "--variant", variant, "--out", str(root)]) == 0
        out = root / variant
        assert main(["train", str(root / f"dataset-{variant}.txt"), "--epochs", str(epochs),
                     "--seed", str(seed), "--out", str(out)]) == 0
        ckpt = str(out / "checkpoint.json")
        for dims in ("2", "3"):
            assert main(["project", ckpt, "--dims", dims, "--seed", str(seed), "--out", str(out)]) == 0
        query = "3" if variant == "interval" else "C5"
        assert main(["neighbors", ckpt, "--query", query, "--k", "10", "--out", str(out)]) == 0
        assert main(["plot", str(out / "projection-2d.tsv"), "--checkpoint", ckpt,
                     "--query", query, "--out", str(out)]) == 0
    return root


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    """Two identical seeded pipeline runs in separate directories."""
    base = tmp_path_factory.mktemp("pipeline")
    runs = []
    for name in ("a", "b"):
        start = time.perf_counter()
        root = run_pipeline(base / name, seed=7)
        PIPELINE_SECONDS.append(time.perf_counter() - start)
        runs.append(root)
    return tuple(runs)


PIPELINE_SECONDS = []
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
