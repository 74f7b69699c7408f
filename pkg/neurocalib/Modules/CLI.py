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

from .Execution_Functions import version, all_methods
from .General_Functions import print_sep
import argparse

commands = ("gen-data", "train", "evaluate", "bench", "sweep", "template")

def print_header():
    '''Prints the default header of the command-line tool.'''
    print(f"\n  NeuroCalib {version}: Neural Calibration for")
    print("        Massive MIMO Beamforming")
    print("\n This program comes with ABSOLUTELY NO WARRANTY.")
    print(" This is free software and can be redistributed")
    print("    under the terms of the GNU GPL v3 or later.")
    print_sep()

def method_list(text):
    '''argparse type of --methods: a comma separated list of known methods.'''
    methods = [m.strip() for m in text.split(",") if len(m.strip()) > 0]
    unknown = [m for m in methods if m not in all_methods]
    if len(unknown) > 0:
        raise argparse.ArgumentTypeError(f"unknown method(s) {', '.join(unknown)}; choose from {', '.join(all_methods)}")
    if len(methods) == 0:
        raise argparse.ArgumentTypeError("no method given")
    return methods

def seed_value(text):
    '''argparse type of --seed: an unsigned 64-bit integer.'''
    try:
        seed = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer")
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("the seed must fit in an unsigned 64-bit integer")
    return seed

def build_parser():
    '''Creates the argument parser with one subcommand per task.

    Returns
    -------
    argparse.ArgumentParser
        The parser. Every subcommand accepts --config, --seed and --out.
    '''
    parser = argparse.ArgumentParser(prog = "neurocalib",
                                     description = "Neural calibration of ZF/LS beamforming for FDD massive MIMO.")
    subparsers = parser.add_subparsers(dest = "command", required = True)
    helps = {"gen-data": "generate a dataset file (train samples followed by test samples)",
             "train": "train learned methods at the base point and save them",
             "evaluate": "evaluate methods at the base point, with saved models if given",
             "bench": "time the per-sample inference of methods",
             "sweep": "run the configured sweep and write the report",
             "template": "write a ready-to-edit experiment file"}
    for command in commands:
        sub = subparsers.add_parser(command, help = helps[command])
        sub.add_argument("--config", help = "experiment file (JSON), read from stdin if piped and omitted")
        sub.add_argument("--seed", type = seed_value, help = "overrides every seed of the experiment")
        sub.add_argument("--out", help = "output file")
        if command in ("train", "evaluate", "bench", "sweep"):
            sub.add_argument("--methods", type = method_list, help = "comma separated methods, overriding the experiment file")
        if command in ("train", "evaluate", "sweep"):
            sub.add_argument("--checkpoint", action = "append", default = [],
                             help = "model file to save to (train) or load from (evaluate, sweep); repeatable")
        if command == "bench":
            sub.add_argument("--repeats", type = int, default = None, help = "timed calls per method")
        sub.add_argument("--quiet", action = "store_true", help = "no progress output")
    return parser

def CLI(args = None):
    '''Parses the command line.

    Parameters
    ----------
    args : list
        Arguments, sys.argv[1:] if None.

    Returns
    -------
    argparse.Namespace
        Parsed arguments.
    '''
    return build_parser().parse_args(args)
