# runner/config.py
import copy
import logging
from pathlib import Path

import yaml
from rest_framework.exceptions import ErrorDetail

from runner.exceptions import ConfigError
from runner.serializers import ScenarioSerializer

logger = logging.getLogger(__name__)


def _flatten(errors, path=()):
    """(field path, message) pairs of a nested DRF error structure."""
    if isinstance(errors, dict):
        for key, value in errors.items():
            yield from _flatten(value, path if key == 'non_field_errors' else path + (key,))
    elif isinstance(errors, list) and errors and not all(isinstance(e, (str, ErrorDetail)) for e in errors):
        for index, value in enumerate(errors):
            if value:
                yield from _flatten(value, path + (index,))
    elif isinstance(errors, list):
        for message in errors:
            yield path, str(message)
    else:
        yield path, str(errors)


def _node_line(node, path) -> int:
    """1-based line of the deepest node along ``path`` in a composed YAML tree."""
    line = node.start_mark.line + 1 if node is not None else 1
    for part in path:
        child = None
        if isinstance(node, yaml.MappingNode):
            child = next((value for key, value in node.value if key.value == str(part)), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            child = node.value[part]
        if child is None:
            break
        node = child
        line = node.start_mark.line + 1
    return line


def apply_overrides(data: dict, overrides: dict) -> dict:
    """Scenario data with command-line values written over the file's; None leaves a value alone."""
    data = copy.deepcopy(data)
    for dotted, value in overrides.items():
        if value is None:
            continue
        *parents, leaf = dotted.split('.')
        section = data
        for name in parents:
            if not isinstance(section.get(name), dict):
                section[name] = {}
            section = section[name]
        section[leaf] = value
    return data


def parse_scenario(text: str, source: str = '<scenario>', overrides=None):
    """Validate scenario YAML into a ScenarioConfig.

    Errors come back as one ConfigError listing ``source:line: field.path: message`` per problem.
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: {exc.problem or exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: a scenario must be a mapping, got {type(data).__name__}")
    data = apply_overrides(data, overrides or {})

    serializer = ScenarioSerializer(data=data)
    if not serializer.is_valid():
        lines = []
        for path, message in _flatten(serializer.errors):
            field = '.'.join(str(p) for p in path) or '(scenario)'
            lines.append(f"{source}:{_node_line(root, path)}: {field}: {message}")
        raise ConfigError('\n'.join(lines))
    config = serializer.save()
    logger.debug("scenario %s (%s) loaded from %s", config.name, config.kind, source)
    return config


def load_scenario(path, overrides=None):
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror or exc}") from exc
    return parse_scenario(text, str(path), overrides)
