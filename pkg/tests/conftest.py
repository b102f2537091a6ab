import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from codetwin.cli import _load_bundle               # noqa: E402
from codetwin.store import TwinStore, full_rebuild  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def payfix_bundle() -> Path:
    return FIXTURES / "payfix"


@pytest.fixture(scope="session")
def payfix_timeline(payfix_bundle):
    return _load_bundle(payfix_bundle)


@pytest.fixture(scope="session")
def payfix_snapshots(payfix_timeline):
    snapshots, linked = full_rebuild(payfix_timeline)
    return snapshots, linked


@pytest.fixture(scope="session")
def payfix_head(payfix_snapshots):
    snapshots, _ = payfix_snapshots
    return snapshots["c2"]


@pytest.fixture()
def payfix_store(tmp_path, payfix_timeline):
    timeline = _copy_timeline(payfix_timeline)
    return TwinStore.build(tmp_path / "store", timeline)


def _copy_timeline(timeline):
    from codetwin.store import RepoTimeline

    return RepoTimeline(list(timeline.records), list(timeline.issues),
                        {r: dict(t) for r, t in timeline.trees.items()})
