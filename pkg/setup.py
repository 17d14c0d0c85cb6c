from setuptools import setup, find_packages
setup(
    name="locolm",
    version="0.0.1",
    description="Location-type conditioned next-word prediction toolkit",
    packages=find_packages(exclude=["tests"]),
    include_package_data=True,
    python_requires=">=3.11",
    install_requires=["numpy>=1.22", "regex>=2022.1.18"],
    extras_require={"test": ["pytest"], "docs": ["sphinx >= 2.0"]},
    scripts=["bin/locolm"],
)
