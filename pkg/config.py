import os


class Config:
    """Base configuration"""
    # Array and OFDM geometry
    ANTENNAS = 64
    SUBCARRIERS = 64
    USERS = 8
    SUBCARRIER_SPACING = 1e9 / 64
    CARRIER_UL = 60e9
    CARRIER_DL = 61e9
    SPACING_OVER_LAMBDA = 0.5

    # Channel draws and pilots
    PATHS = 6
    ZC_ROOT = 1
    PILOT_LAYOUT = 'comb'  # comb, contiguous
    SEPARATION_GUARD = True
    DELAY_SPAN = 1.0  # in cells of 1/(N f0)

    # Block IRLS
    DOA_GRID = 128
    DELAY_GRID = 128
    IRLS_EPSILON = 1e-3
    IRLS_PRUNE_RATIO = 1e-2
    IRLS_ETA = 1e-4
    IRLS_MAX_ITERATIONS = 200
    IRLS_STEP = 'gauss_newton'  # gauss_newton, gradient
    IRLS_DETECTION_FACTOR = 5.0

    # Baselines
    OMP_MAX_BLOCKS = 8
    REFINE_LEVELS = 4

    # Downlink
    RECIPROCITY = 'physical'  # physical, numeric

    # Sweeps
    AXIS = 'snr'
    SNR_POINTS = [0.0, 10.0, 20.0, 30.0]
    BANDWIDTH_POINTS = [20e6, 200e6, 1e9]
    ANTENNA_POINTS = [32, 64]
    SWEEP_SNR = 10.0
    TRIALS = 50
    ESTIMATORS = ['proposed', 'polished', 'ongrid', 'refine', 'nobse', 'nommv']

    SEED = int(os.environ.get('SQUINT_SEED') or 2024)
    WORKERS = int(os.environ.get('SQUINT_WORKERS') or 1)
    OUTPUT_DIR = os.environ.get('SQUINT_OUTPUT_DIR') or os.path.join(
        os.path.dirname(os.path.abspath(__file__)), 'results')
    LOG_LEVEL = os.environ.get('SQUINT_LOG_LEVEL') or 'INFO'


class DeskConfig(Config):
    """Desk-scale profile"""


class FullScaleConfig(Config):
    """Full-scale profile: long runs, fine initial grids"""
    ANTENNAS = 128
    ANTENNA_POINTS = [32, 64, 128]
    DOA_GRID = 1024
    DELAY_GRID = 1024
    TRIALS = 1000


class TestingConfig(Config):
    """Small and fast"""
    TESTING = True
    ANTENNAS = 16
    SUBCARRIERS = 32
    USERS = 4
    SUBCARRIER_SPACING = 1e9 / 32
    PATHS = 2
    DOA_GRID = 32
    DELAY_GRID = 16
    IRLS_MAX_ITERATIONS = 60
    SNR_POINTS = [10.0, 20.0]
    TRIALS = 2
    ESTIMATORS = ['proposed']
    LOG_LEVEL = 'WARNING'


config = {
    'desk': DeskConfig,
    'full': FullScaleConfig,
    'testing': TestingConfig,
    'default': DeskConfig
}
