"""Entry point for python -m advartifact."""

from advartifact.cli.main import app

if __name__ == "__main__":
    app()
