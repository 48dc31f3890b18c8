import os
from dotenv import load_dotenv

load_dotenv()


def get_log_level(default='INFO'):
    """
    Get the log level name from the environment.
    Falls back to the given default when unset or unknown.
    """
    level = os.getenv('BIFURCATA_LOG_LEVEL', default).upper()
    if level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
        return default
    return level


class Config:
    """Base configuration"""
    LOG_LEVEL = get_log_level()

    # Worker threads for per-candidate analysis
    JOBS = int(os.getenv('BIFURCATA_JOBS', 1))

    # Reserved; every algorithm is deterministic
    SEED = os.getenv('BIFURCATA_SEED')

    # Spectral thresholds (relative to the spectral radius)
    NULL_TOL_REL = float(os.getenv('BIFURCATA_NULL_TOL_REL', 1e-8))
    ISOLATION_GAP_FACTOR = 1e3

    # Crossing numbers
    CROSSING_STEPS = 16

    # Complement equation
    PSI_TOL_REL = 1e-11
    NEWTON_MAX_ITER = 50
    NEWTON_MAX_HALVINGS = 30
    PROBE_RADIUS = 1e-2
    TRUST_RADIUS_CAP = 1.0

    # Reduced critical point search and classification
    GRID_M = int(os.getenv('BIFURCATA_GRID_M', 5))
    CRITICAL_GRAD_TOL = 1e-9
    CRITICAL_MAX_ITER = 100
    DEDUP_RADIUS = 1e-7
    ISO_RADIUS = 1e-5
    SIDE_SAMPLES = 8
    MAX_CLASSIFY_DIM = 3
    EXTREMUM_RADIUS = 0.05
    EXTREMUM_POINTS = 41
    EVEN_SAMPLES = 50
    EVEN_TOL = 1e-10

    @staticmethod
    def init_logging():
        pass


class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True
    LOG_LEVEL = get_log_level('DEBUG')


class TestingConfig(Config):
    """Testing configuration"""
    DEBUG = False
    LOG_LEVEL = 'WARNING'
    JOBS = 1


class ProductionConfig(Config):
    """Production configuration"""
    DEBUG = False

    @staticmethod
    def init_logging():
        Config.init_logging()

        # Log to stderr
        import logging
        from logging import StreamHandler
        logger = logging.getLogger('bifurcata')
        if logger.handlers:
            return
        stream_handler = StreamHandler()
        stream_handler.setLevel(logging.INFO)
        stream_handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
        logger.addHandler(stream_handler)


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': DevelopmentConfig
}
