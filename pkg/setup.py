import re
from pathlib import Path

import setuptools

ROOT = Path(__file__).parent


def read_metadata() -> dict[str, str]:
    """``__version__`` and ``__author__`` from the package init."""
    text = (ROOT / "lightltv" / "__init__.py").read_text(encoding="utf-8")
    metadata = dict(re.findall(r'^(__\w+__)\s*=\s*"([^"]*)"', text, re.MULTILINE))
    missing = {"__version__", "__author__"} - set(metadata)
    if missing:
        raise ValueError(f"lightltv/__init__.py is missing {sorted(missing)}")
    return metadata


def read_requirements(path: Path) -> list[str]:
    if not path.exists():
        return []
    lines = (line.strip() for line in path.read_text(encoding="utf-8").splitlines())
    return [line for line in lines if line and not line.startswith("#")]


metadata = read_metadata()
readme = ROOT / "README.md"

setuptools.setup(
    name="lightltv",
    version=metadata["__version__"],
    author=metadata["__author__"],
    description="Spend prediction with label standardization, a numpy model zoo and stable ranking evaluation",
    long_description=readme.read_text(encoding="utf-8") if readme.exists() else "",
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=("tests*", "docs*", "reproduce*")),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    python_requires=">=3.10",
    install_requires=read_requirements(ROOT / "requirements.txt"),
    include_package_data=True,
    extras_require={
        "cli": read_requirements(ROOT / "lightltv" / "cli" / "requirements.txt"),
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": [
            "lightltv=lightltv.cli.main:main [cli]",
        ],
    },
)
