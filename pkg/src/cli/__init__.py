from .config import RunConfig, load_config
