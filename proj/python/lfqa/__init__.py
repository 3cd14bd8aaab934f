"""Long-form QA error annotation, scoring, feedback and refinement toolkit."""

try:
    from ._lfqa import *  # noqa: F401,F403
    from ._lfqa import LfqaError, dispatch
except ImportError:  # in-tree build: the extension sits next to the package on sys.path
    from _lfqa import *  # type: ignore  # noqa: F401,F403
    from _lfqa import LfqaError, dispatch  # type: ignore


def main(argv=None):
    import sys

    code, out, err = dispatch(list(sys.argv[1:] if argv is None else argv))
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
