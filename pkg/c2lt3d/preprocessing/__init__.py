"""
Preprocessing modules: mesh ingest, surface objects, partitions, archives and synthetic assemblies.
"""
