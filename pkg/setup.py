from setuptools import setup, find_packages

setup(
    name="roadspread",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    py_modules=["run_spread"],
    package_data={
        "core.data": ["*.json"],
        "core.kernels": ["*.json"],
    },
    python_requires=">=3.9",
    install_requires=[
        "numpy",
        "scipy",
        "pandas>=1.5",
        "python-dotenv",
        "matplotlib",
    ],
    extras_require={
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": [
            "roadspread=core.cli:run",
        ],
    },
)
