class CorecrestError(Exception):
    """Base class for errors that map onto a process exit code."""

    exit_code = 1


class ConfigError(CorecrestError):
    exit_code = 2


class InputError(CorecrestError):
    exit_code = 2


class InfeasibleGraphError(CorecrestError):
    exit_code = 2


class ParseError(CorecrestError):
    exit_code = 3

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class StageError(CorecrestError):
    exit_code = 4

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class MissingYearError(InputError):
    def __init__(self, node_keys: list[str]):
        preview = ", ".join(node_keys[:20])
        more = f" (+{len(node_keys) - 20} more)" if len(node_keys) > 20 else ""
        super().__init__(
            f"{len(node_keys)} cited node(s) have no publication year: {preview}{more}"
        )
        self.node_keys = node_keys


class UndefinedModularityError(ValueError):
    pass
