import numpy as np
import pytest

from hullkit.media_io import FrameBuffer


def random_frame(rng, width, height, bit_depth=8, index=0, fps=30):
    hi = 1 << bit_depth
    return FrameBuffer((rng.integers(0, hi, (height, width)),
                        rng.integers(0, hi, (height // 2, width // 2)),
                        rng.integers(0, hi, (height // 2, width // 2))), bit_depth, index, fps)


def flat_frame(value, width, height, bit_depth=8, index=0, fps=30):
    y = np.full((height, width), value)
    c = np.full((height // 2, width // 2), value)
    return FrameBuffer((y, c, c.copy()), bit_depth, index, fps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_features(rng):
    from hullkit.complexity import SceneFeatures
    return SceneFeatures.from_array([rng.uniform(0.6, 12), rng.uniform(0, 0.57), rng.uniform(30, 200),
                                     rng.uniform(0, 0.9), rng.uniform(90, 160), rng.uniform(0, 0.9),
                                     rng.uniform(90, 160)])


def mock_frame(n_scenes, seed=0, qps=(10, 20, 30, 40, 50), resolutions=(360, 540, 720, 1080, 1440, 2160),
               params=None):
    """Dataset frame of mock encodes over a small grid."""
    import pandas as pd

    from hullkit.harness import mock_encode

    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_scenes):
        f = random_features(rng)
        for r in resolutions:
            for q in qps:
                p = mock_encode(f, r, q, params, scene_id=f"s{i:03d}")
                rows.append({"scene_id": p.scene_id, **f.to_dict(), "resolution": r, "qp": q,
                             "bitrate_kbps": p.bitrate_kbps, "psnr_db": p.psnr_db,
                             "xpsnr_db": p.xpsnr_db})
    return pd.DataFrame(rows)


# -- acceptance report --------------------------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        terminalreporter.write_line(f"[{status}] criterion {number:2d} {title}" + (f" ({detail})" if detail else ""))
