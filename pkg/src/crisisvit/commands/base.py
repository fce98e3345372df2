"""Shared command plumbing."""

from abc import ABC, abstractmethod

from rich.console import Console

from crisisvit.errors import CrisisViTError, ValidationError

console = Console()


class Command(ABC):
    """A CLI verb. ``run`` turns toolkit errors into a message and an exit code."""

    def __init__(self, out: Console | None = None):
        self.out = out or console

    @abstractmethod
    def execute(self) -> int:
        """Do the work and return the exit code."""
        pass

    def run(self) -> int:
        try:
            return self.execute()
        except ValidationError as e:
            self.out.print(f"[red]✗ Invalid experiment ({len(e.violations)} violation(s)):[/red]")
            for violation in e.violations:
                self.out.print(f"  [red]•[/red] {violation.path}: {violation.message}")
            return e.exit_code
        except CrisisViTError as e:
            self.out.print(f"[red]✗ Error: {e}[/red]")
            return e.exit_code
