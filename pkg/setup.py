from setuptools import setup

setup(
    name="criticalflow",
    version="0.1.0",
    description="Pseudospectral compressible/incompressible Navier-Stokes runs with Besov diagnostics",
    py_modules=[
        "compressible_solver", "errors", "experiments", "functionals", "helmholtz",
        "incompressible_solver", "littlewood_paley", "main", "phi_functions", "setting_module",
        "spectral_core", "trajectory",
    ],
    python_requires=">=3.10",
    install_requires=["numpy", "scipy>=1.9", "matplotlib", "python-dotenv", "tomli; python_version<'3.11'"],
    extras_require={"test": ["pytest", "mpmath"]},
    entry_points={"console_scripts": ["criticalflow=main:main"]},
)
