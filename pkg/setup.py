import setuptools

# have to exec; can't import the package before it's built.
exec(open("hadrl/_version.py", encoding="utf-8").read())

install_requires = [
    'numpy',
]

extras_require = {
    'test': ['pytest'],
}

with open("README.md", "r", encoding='utf-8') as f:
    long_description = f.read()

entry_points = {
    'console_scripts': [
        'hadrl = hadrl.scripts.cli:main',
    ]
}

setuptools.setup(
    name="hadrl",
    version=__version__,
    description="Hierarchical action decomposition for deep RL penetration testing agents",
    long_description=long_description,
    license='MIT',
    keywords='reinforcement-learning dqn penetration-testing action-space',
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=['tests']),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.7',
    entry_points=entry_points,
    install_requires=install_requires,
    extras_require=extras_require,
    package_data={
        'hadrl': ['presets/*.ini'],
    }
)
