"""Init file for berry_svd package."""
