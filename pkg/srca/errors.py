class SrcaError(Exception):
    """Base error. `detail` is what the CLI prints, `exit_code` what it returns."""

    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(SrcaError):
    exit_code = 1


class DataError(SrcaError):
    exit_code = 2


class NumericalError(SrcaError):
    exit_code = 3
