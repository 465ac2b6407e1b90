from setuptools import setup

exec(open("memaudit/version.py").read())

setup(
    name="python-memaudit",
    version=__version__,  # type: ignore
    packages=["memaudit", "memaudit.test"],
    package_data={"memaudit.test": ["sample_files/*"]},
    license="BSD licence, see LICENCE.txt",
    description="Membership inference audits of classifiers, with conformal p-values and false discovery rate control.",
    long_description=open("README.rst").read(),
    install_requires=["numpy", "scipy", "typing-extensions"],
    extras_require={"pandas": ["pandas"]},
    entry_points={"console_scripts": ["memaudit=memaudit.cli:main"]},
    python_requires=">=3.7",
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.7",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
)
