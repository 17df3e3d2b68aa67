"""Exception hierarchy shared by all modules.

Every error raised on purpose by the package derives from ``PerfAlignError``
so the command line can map failures to exit codes without catching
programming errors.
"""


class PerfAlignError(Exception):
    pass


class AudioError(PerfAlignError):
    pass


class MalformedHeader(AudioError):
    pass


class UnsupportedEncoding(AudioError):
    pass


class TruncatedData(AudioError):
    pass


class IndexOutOfRange(PerfAlignError, IndexError):
    pass


class InvalidConfig(PerfAlignError, ValueError):
    pass


class DimensionMismatch(PerfAlignError, ValueError):
    pass


class EmptySequence(PerfAlignError, ValueError):
    pass


class EmptyPath(PerfAlignError, ValueError):
    pass


class AnnotationError(PerfAlignError, ValueError):
    pass


class NoMarkers(AnnotationError):
    pass


class UnparseableLine(AnnotationError):
    def __init__(self, path, lineno, line):
        super().__init__(f"{path}:{lineno}: cannot parse marker line {line!r}")
        self.lineno = lineno


class NonMonotonic(AnnotationError):
    def __init__(self, where, lineno):
        super().__init__(f"{where}: marker at line {lineno} is not after its predecessor")
        self.lineno = lineno


class LengthMismatch(PerfAlignError, ValueError):
    pass


class NonMonotonicResult(AnnotationError):
    pass


class TooFewSamples(PerfAlignError, ValueError):
    pass


class Empty(PerfAlignError, ValueError):
    pass


class SampleSizeOutOfRange(PerfAlignError, ValueError):
    pass


class EmptyGrid(InvalidConfig):
    pass
