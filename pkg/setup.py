from setuptools import setup, find_packages

install_requires = [
    "execnet>=1.1",
    "pluggy>=0.12",
    "py>=1.10",
    "numpy>=1.20",
    "scipy>=1.7",
    "pandas>=1.5",
    "iniconfig",
]


with open("README.rst") as f:
    long_description = f.read()

setup(
    name="replenlab",
    use_scm_version={
        "write_to": "src/replenlab/_version.py",
        "fallback_version": "0.1.0",
    },
    description="OR-guided pretrain-then-reinforce inventory replenishment laboratory",
    long_description=long_description,
    license="MIT",
    platforms=["linux", "osx", "win32"],
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    extras_require={
        "testing": ["pytest>=6.2", "hypothesis"],
        "psutil": ["psutil>=3.0"],
    },
    entry_points={"console_scripts": ["replenlab = replenlab.cli:main"]},
    zip_safe=False,
    python_requires=">=3.8",
    install_requires=install_requires,
    setup_requires=["setuptools_scm"],
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: POSIX",
        "Operating System :: Microsoft :: Windows",
        "Operating System :: MacOS :: MacOS X",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Topic :: Office/Business",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3 :: Only",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
)
