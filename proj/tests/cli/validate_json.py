"""Validate JSON documents against a schema file: validate_json.py SCHEMA DOC..."""
import json
import sys

import jsonschema


def main(argv):
    if len(argv) < 3:
        print(__doc__, file=sys.stderr)
        return 1
    with open(argv[1]) as fh:
        schema = json.load(fh)
    validator = jsonschema.Draft202012Validator(schema)
    bad = 0
    for path in argv[2:]:
        with open(path) as fh:
            doc = json.load(fh)
        errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
        for err in errors:
            print(f"{path}: {'/'.join(map(str, err.path)) or '<root>'}: {err.message}", file=sys.stderr)
        bad += bool(errors)
        print(f"{path}: {'invalid' if errors else 'valid'}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
