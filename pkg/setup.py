from setuptools import find_packages, setup

setup(
    name="vibronic-entanglement",
    version="1.0.0",
    description="Electron-nuclear entanglement of Born-Oppenheimer and Born-Huang vibronic states in 1D models.",
    packages=find_packages(include=["src", "src.*"]),
    py_modules=["app"],
    package_data={"src.data": ["*.dat"]},
    install_requires=["numpy", "scipy", "pandas", "joblib"],
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["vibronic-entanglement = app:main"]},
    python_requires=">=3.9",
)
