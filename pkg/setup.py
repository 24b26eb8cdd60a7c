from setuptools import setup, find_packages

setup(
    name="cyhmm-engine",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    py_modules=["main"],
    install_requires=[
        "numpy>=1.24.0",
        "scipy>=1.10.0",
        "pandas>=2.0.0",
        "scikit-learn>=1.3.0",
        "prometheus-client>=0.16.0",
        "pyyaml>=6.0.0",
    ],
    extras_require={
        "test": [
            "pytest>=7.0.0",
            "pytest-asyncio>=0.21.0",
        ],
    },
    entry_points={
        "console_scripts": ["cyhmm=main:main"],
    },
    python_requires=">=3.8",
)
