import pytest

from helpers import CRITERIA, make_bundle
from pyramid_style import Extractor, random_weights, save_bundle
from pyramid_style.features import save_extractor_weights
from pyramid_style.testing import write_corpus, write_style


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(CRITERIA):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}  {detail}")


@pytest.fixture(scope="session")
def extractor():
    return Extractor(random_weights(0))


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    write_corpus(root / "content", 10, seed=0)
    write_style(root / "style.png")
    save_extractor_weights(random_weights(0), root / "vgg.safetensors")
    return root


@pytest.fixture(scope="session")
def bundle_path(tmp_path_factory, extractor):
    path = tmp_path_factory.mktemp("bundle") / "model.safetensors"
    save_bundle(make_bundle(extractor), path)
    return path
