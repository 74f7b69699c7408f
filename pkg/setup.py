# NeuroCalib: Neural Calibration for Massive MIMO Beamforming
# Copyright (C) 2026 by the NeuroCalib developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program. If not, see <https://www.gnu.org/licenses/>.

from setuptools import setup, find_packages
import sys
import os

current_version='0.1.0'

def bump_version(version, bump_type):
    major, minor, patch = map(int, version.split("."))
    if bump_type == "major":
        return f"{major+1}.0.0"
    if bump_type == "minor":
        return f"{major}.{minor+1}.0"
    if bump_type == "patch":
        return f"{major}.{minor}.{patch+1}"
    return version

# Bumps version
if len(sys.argv) > 1 and sys.argv[1] in ["major", "minor", "patch"]:
    new_version = bump_version(current_version, sys.argv[1])
    with open(__file__, "r") as file:
        lines = file.readlines()
    with open(__file__, "w") as file:
        for line in lines:
            if line.startswith("current_version="):
                file.write(f"current_version='{new_version}'\n")
            else:
                file.write(line)
    print(f"Version bumped from {current_version} to {new_version}.")
    os._exit(0)

# Captures the description from the markdown readme
with open("README.md", "r", encoding="utf-8") as f:
    long_description_from_file = "".join(line for line in f if line[0] != "!")

# Captures the requirements from the requirements file
with open("requirements.txt", "r") as f:
    requirements = [line.strip() for line in f if line[0] != "#" and len(line.strip()) > 0]

setup(
    name='neurocalib',
    version=current_version,
    author='NeuroCalib developers',
    description='Neural calibration of ZF and LS for FDD massive MIMO downlink beamforming.',
    long_description=long_description_from_file,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "examples"]),
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: GNU General Public License v3 or later (GPLv3+)',
        'Operating System :: OS Independent',
    ],
    python_requires='>=3.8',
    install_requires=requirements,
    extras_require={
        'test': ['pytest'],
    },
    entry_points={
        'console_scripts': [
            'neurocalib = neurocalib:neurocalib',
        ]
    }
)
