"""Bundled example descriptions used by the tests and the documentation."""

from importlib import resources

NAMES = ("french", "polish", "english", "french_naive")


def fixture_text(name: str) -> str:
    if name not in NAMES:
        raise KeyError(name)
    return (
        resources.files(__package__).joinpath(f"{name}.morph").read_text("utf-8")
    )


def fixture_path(name: str) -> str:
    if name not in NAMES:
        raise KeyError(name)
    return str(resources.files(__package__).joinpath(f"{name}.morph"))
