import sys

import deepelastica


def cli_argv():
    sys.exit(deepelastica.cli(command_line_args=sys.argv[1:]))
