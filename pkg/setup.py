from setuptools import setup, find_packages

setup(
    name="gnmn_epidemic",
    version="0.2.0",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    install_requires=[
        'numpy',
        'scipy',
        'pandas',
        'matplotlib',
        'psutil',
        'python-dotenv',
    ],
    entry_points={
        'console_scripts': [
            'gnmn=src.main:main',
        ],
    },
)
