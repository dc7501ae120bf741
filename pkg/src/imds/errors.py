class ImdsError(Exception):
    """Base class for every error raised by the toolkit."""


class ParseError(ImdsError):
    def __init__(self, message, line=None, column=None, expected=()):
        self.message = message
        self.line = line
        self.column = column
        self.expected = tuple(sorted(set(expected)))
        text = message
        if line is not None:
            text = f"{line}:{column}: {message}"
        if self.expected:
            text += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(text)


class SpecError(ImdsError):
    """Instantiation or validation failure; ``errors`` lists every finding."""

    def __init__(self, message, errors=None):
        self.errors = list(errors) if errors else [message]
        super().__init__(message)


class UnknownIdentifier(ImdsError, KeyError):
    def __str__(self):
        return self.args[0]


class NotEnabled(ImdsError):
    pass


class LimitExceeded(ImdsError):
    def __init__(self, message, states, transitions):
        self.states = states
        self.transitions = transitions
        super().__init__(f"{message} (explored {states} states, {transitions} transitions)")


class NoWitness(ImdsError):
    pass


class RenderError(ImdsError):
    pass
