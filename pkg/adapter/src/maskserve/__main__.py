import argparse
import sys

from .plugins import available_plugins
from .server import AdapterConfig, serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="maskserve",
        description="Serve segmentation/inpainting plugins over the v1 line protocol.",
    )
    parser.add_argument(
        "--transport",
        default="stdio",
        help='"stdio" (default) or "tcp:<host>:<port>"',
    )
    parser.add_argument(
        "--plugin",
        default="classical",
        help=f"plugin to serve (available: {', '.join(sorted(available_plugins()))})",
    )
    parser.add_argument(
        "--max-image-side",
        type=int,
        default=1024,
        help="reject request images larger than this (minimum 64)",
    )
    args = parser.parse_args(argv)
    try:
        config = AdapterConfig(
            transport=args.transport,
            plugin=args.plugin,
            max_image_side=args.max_image_side,
        )
        serve(config)
    except KeyError as exc:
        print(f"maskserve: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"maskserve: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
