from setuptools import setup, find_packages

with open('requirements.txt') as f:
    required_packages = []
    for line in f:
        if not line.startswith('-e'):
            required_packages.append(line.strip())

setup(
    name='bidwright',
    version='0.1.0',
    description='Real-time bidding log replay with expert strategies and an LLM bidding agent',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=('tests', 'tests.*')),
    package_data={'bidwright.agent': ['prompts/*.txt']},
    install_requires=required_packages,
    entry_points={'console_scripts': ['bidwright=bidwright.harness.cli:main']},
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
    ],
    python_requires='>=3.10',
)
