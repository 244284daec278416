
from fracmerge.agglomerator import AssemblyConfig, AssemblyResult, assemble
from fracmerge.command import command
from fracmerge.fragment_record import AssemblySample, FragmentRecord
from fracmerge.main import main
from fracmerge.pose import Pose7

__all__ = ['AssemblyConfig', 'AssemblyResult', 'AssemblySample',
           'FragmentRecord', 'Pose7', 'assemble', 'command', 'main']
