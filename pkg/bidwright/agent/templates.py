import os
import string
from dataclasses import dataclass

from bidwright.core import logger
from bidwright.core.exceptions import TemplateError

TEMPLATE_NAMES = ('profile', 'sum', 'ins', 'act', 'act_free', 'ref')
PROMPTS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'prompts')


class _StrictValues(dict):
    def __missing__(self, key):
        raise TemplateError(f"unbound placeholder {{{key}}}")


@dataclass(frozen=True)
class PromptTemplate:
    """
    Plain-text prompt with ``{placeholder}`` fields; literal braces are written doubled.
    """
    name: str
    text: str

    def placeholders(self):
        try:
            return {field for _, field, _, _ in string.Formatter().parse(self.text) if field}
        except ValueError as e:
            raise TemplateError(f"template '{self.name}' is malformed: {e}") from None

    def render(self, **values):
        """
        :raises TemplateError: When a placeholder has no value or the text is malformed.
        """
        try:
            return self.text.format_map(_StrictValues(values))
        except TemplateError as e:
            raise TemplateError(f"template '{self.name}': {e}") from None
        except (ValueError, IndexError, AttributeError) as e:
            raise TemplateError(f"template '{self.name}' is malformed: {e}") from None


def load_templates(directory=None):
    """
    Read ``{name}.txt`` for every prompt name. Files found in ``directory`` replace the shipped
    defaults one by one, so a partial override directory is fine.

    :param str directory: Optional directory with replacement templates.
    :rtype: dict[str, PromptTemplate]
    """
    templates = {}
    for name in TEMPLATE_NAMES:
        path = os.path.join(PROMPTS_DIR, f"{name}.txt")
        if directory and os.path.isfile(os.path.join(directory, f"{name}.txt")):
            path = os.path.join(directory, f"{name}.txt")
            logger.info(f"[Templates] Using override {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                templates[name] = PromptTemplate(name=name, text=f.read())
        except OSError as e:
            raise TemplateError(f"cannot read template '{name}' from {path}: {e}") from None
        templates[name].placeholders()
    return templates
