import logging
import traceback


class BidwrightError(Exception):
    """
    Base class for every error raised by bidwright.

    :param str message: The error message to display.
    :param list context: Optional context information, such as stack trace details.
    """

    def __init__(self, message, context=None):
        super().__init__(message)
        self.context = context or self._get_context()

    def _get_context(self):
        """
        Retrieve the stack trace to provide additional context for the error.

        :return: The stack trace as a list of strings.
        :rtype: list
        """
        return traceback.format_stack()

    def log(self, logger=None):
        """
        Log the error message along with its context using the specified logger.

        :param logging.Logger logger: The logger instance to use. If None, a default logger is used.
        """
        logger = logger or logging.getLogger(__name__)
        logger.error(f"Error: {self}, Context: {self.context}")


class ConfigError(BidwrightError):
    def __init__(self, field_path, message):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


class MalformedLine(BidwrightError):
    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class InsufficientDays(BidwrightError):
    pass


class InvalidParams(BidwrightError):
    pass


class NumericalDivergence(BidwrightError):
    pass


class NoClicks(BidwrightError):
    pass


class EmptyGrid(BidwrightError):
    pass


class DegenerateBudget(BidwrightError):
    pass


class KindMismatch(BidwrightError):
    pass


class CorruptLine(BidwrightError):
    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class BackendError(BidwrightError):
    pass


class ParseError(BidwrightError):
    pass


class TemplateError(BidwrightError):
    pass


class BidderError(BidwrightError):
    pass


class DayReplayError(BidwrightError):
    """
    A bidder failed while a day was being replayed. Carries the step at which it happened.
    """

    def __init__(self, day_index, step_index, message):
        super().__init__(f"day {day_index} step {step_index}: {message}")
        self.day_index = day_index
        self.step_index = step_index
