"""Init file for utils folder."""
