
from typing import Optional

from fracmerge.fragment_record import AssemblySample


class AssemblyStore:
    """Interface for querying assemblies from a store."""

    def get_assembly(self, name: str) -> Optional[AssemblySample]:
        """Queries an assembly from the store.

        Parameters
        ----------
        name : str
            The name of the assembly to return.

        Returns
        -------
        Optional[AssemblySample]
            The assembly or None if not found.
        """
        raise NotImplementedError()

    def get_names(self, split: Optional[str] = None) -> list[str]:
        """Returns the names of all assemblies in the store, optionally only
        those in the given split.

        Parameters
        ----------
        split : Optional[str], optional
            Split to restrict to, e.g. "train" or "test".

        Returns
        -------
        list[str]
            Sorted assembly names.
        """
        raise NotImplementedError()

    def get_assemblies(self,
                       split: Optional[str] = None) -> list[AssemblySample]:
        """Returns all assemblies in the store (or in one split).

        Returns
        -------
        list[AssemblySample]
            The loaded assemblies, ordered by name.
        """
        assemblies: list[AssemblySample] = []
        for name in self.get_names(split):
            assembly = self.get_assembly(name)
            if assembly is not None:
                assemblies.append(assembly)
        return assemblies
