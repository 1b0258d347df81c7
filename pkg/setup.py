from setuptools import setup

setup(
    package_dir={"": "src"},
    packages=[
        "grad_subspace_ood",
        "grad_subspace_ood.cli",
        "grad_subspace_ood.config",
        "grad_subspace_ood.detectors",
        "grad_subspace_ood.evaluation",
        "grad_subspace_ood.gradembed",
        "grad_subspace_ood.micronet",
        "grad_subspace_ood.storage",
        "grad_subspace_ood.subspace",
        "grad_subspace_ood.utils",
    ],
)
