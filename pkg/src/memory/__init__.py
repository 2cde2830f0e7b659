"""
DeskAIA Memory Module
Asynchronous memory pool of loss-tagged person features
"""
from .pool import (
    INF, MemoryEntry, MemoryKey, MemoryPool, assemble_memory, fit_rows, load_pool, penalty,
    read_window, save_pool, write,
)
