import pytest

from zscos.model import ModelConfig

TINY = dict(image_size=32, patch_size=8, depth=1, d_v=16, heads=2, d_lr=4, mlp_ratio=2,
            caption_len=8, caption_dim=6, d=8)


@pytest.fixture
def tiny_cfg():
    return ModelConfig(seed=0, **TINY)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
