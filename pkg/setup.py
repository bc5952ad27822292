from setuptools import setup
from os import path
from io import open

here = path.abspath(path.dirname(__file__))

with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

with open(path.join(here, 'requirements.txt'), 'r') as f:
    requirements = f.read().splitlines()

setup(
    name='evmarket',
    version='0.1.0',

    description='Bid-based pricing and scheduling for public EV charging',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=['evmarket'],
    python_requires='>=3.8',
    install_requires=requirements,
    extras_require={'test': ['pytest']},
    include_package_data=True,
    data_files=[('data', ['data/example_run_config.json',
                          'data/tiny_a.json',
                          'data/tiny_b.json'])],
    entry_points={'console_scripts': ['evmarket=evmarket.cli:main']},
)
