"""Entry point for python -m crisisvit."""

from crisisvit.cli import main

if __name__ == "__main__":
    main()
