from setuptools import setup, find_packages

version = {}
with open("src/deepelastica/_version.py") as fp:
    exec(fp.read(), version)

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="DeepElastica",
    version=version['__version__'],
    author="DeepElastica Contributors",
    description="Unsupervised image inpainting by minimising Euler's elastica energy through a deep image prior.",
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages("src"),
    package_dir={'': 'src'},
    zip_safe=False,
    extras_require={"test": ["pytest>=6.0"]},
    entry_points={
        'console_scripts': ['deepelastica=deepelastica._cli_argv:cli_argv'],
    },
    python_requires=">=3.7",
    install_requires=['scipy', 'numpy>=1.20', 'networkx', 'matplotlib', 'typer', 'click', 'tqdm', 'pypng']
)
