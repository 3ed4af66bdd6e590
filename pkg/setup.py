# setup.py
from setuptools import setup, find_packages

setup(
    name="trajsynth",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    include_package_data=True,
    package_data={"trajsynth.models": ["*.json"]},
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "pandas>=1.5",
        "scikit-learn>=1.3",
        "joblib>=1.3",
        "python-dotenv>=1.0",
    ],
    extras_require={
        "dev": [
            "pytest>=7.4",
            "hypothesis>=6.80",
        ],
    },
    entry_points={
        "console_scripts": [
            "trajsynth=trajsynth.cli:main",
        ],
    },
    description="Differentially private synthesis and evaluation of longitudinal tabular data",
    keywords="differential-privacy synthetic-data time-series hmm dtw",
    python_requires=">=3.8",
)
