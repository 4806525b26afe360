from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import List, Dict, Any
import os
import logging
from pathlib import Path

logger = logging.getLogger(__name__)

class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="TWB_",
        extra="ignore",
    )

    # Application
    app_version: str = "1.0.0"

    # API Configuration
    api_host: str = "0.0.0.0"
    api_port: int = 8000

    # Numerics
    tail_tol: float = 1e-10  # truncation tolerance for every pmf cutoff
    max_cutoff: int = 4096

    # Simulation
    default_shots: int = 200_000
    simulation_block_size: int = 16_384  # shots per counter-based substream
    max_workers: int = 4

    # Criteria
    bootstrap_resamples: int = 200

    # Reconstruction
    fit_restarts: int = 20
    fit_min_shots: int = 1000
    fit_fatol: float = 1e-8
    fit_xatol: float = 1e-6
    fit_maxiter: int = 4000
    noise_mode_floor: float = 1e-5
    constraint_rtol: float = 1e-6

    # Intensity quasi-distributions
    grid_points: int = 201
    grid_span_factor: float = 5.0
    max_series_order: int = 40
    precision_threshold: float = 1e-6
    precision_floor: float = 1e-12  # coefficients smaller than this are judged by absolute error
    singular_threshold: float = 0.5
    extended_precision: bool = True
    extended_precision_digits: int = 50
    eps_neg: float = 1e-6
    coverage_tol: float = 1e-8

    # Storage Configuration
    schema_version: str = "twb-v1"
    output_dir: str = "./storage/runs"

    # CORS Configuration
    cors_origins: str = "http://localhost:3000,http://localhost:5173,http://localhost:8080"

    @property
    def cors_origins_list(self) -> List[str]:
        """Convert comma-separated CORS origins to list"""
        return [origin.strip() for origin in self.cors_origins.split(",")]

    def validate_configuration(self) -> Dict[str, Any]:
        """Validate configuration and environment"""
        validation_results = {
            "overall_status": "valid",
            "warnings": [],
            "errors": [],
            "environment_info": {}
        }

        try:
            self._validate_numerics(validation_results)
            self._validate_storage_directories(validation_results)
            self._validate_environment(validation_results)

            if validation_results["errors"]:
                validation_results["overall_status"] = "error"
            elif validation_results["warnings"]:
                validation_results["overall_status"] = "warning"

        except Exception as e:
            validation_results["errors"].append(f"Configuration validation failed: {str(e)}")
            validation_results["overall_status"] = "error"

        return validation_results

    def _validate_numerics(self, results: Dict[str, Any]):
        """Check value ranges of the numerical knobs"""
        if not 0 < self.tail_tol < 1e-3:
            results["errors"].append(f"tail_tol must lie in (0, 1e-3), got {self.tail_tol}")
        if self.simulation_block_size < 1 or self.max_workers < 1:
            results["errors"].append("simulation_block_size and max_workers must be positive")
        if self.bootstrap_resamples < 2:
            results["errors"].append("bootstrap_resamples must be at least 2")
        if self.fit_restarts < 1:
            results["errors"].append("fit_restarts must be at least 1")
        if self.precision_floor <= 0:
            results["errors"].append(f"precision_floor must be positive, got {self.precision_floor}")
        if self.grid_points < 3:
            results["errors"].append("grid_points must be at least 3")
        if self.max_series_order > 60:
            results["warnings"].append(
                f"max_series_order={self.max_series_order} makes the alternating sums lose most digits"
            )
        if self.tail_tol > 1e-8:
            results["warnings"].append(f"tail_tol={self.tail_tol} is loose; normalization checks will be coarse")

    def _validate_storage_directories(self, results: Dict[str, Any]):
        """Validate the output directory exists and is writable"""
        try:
            path = Path(self.output_dir)
            if not path.exists():
                path.mkdir(parents=True, exist_ok=True)
                results["warnings"].append(f"Created missing directory: {self.output_dir}")

            test_file = path / ".test_write"
            test_file.write_text("test")
            test_file.unlink()

        except Exception as e:
            results["errors"].append(f"Directory {self.output_dir} is not writable: {str(e)}")

    def _validate_environment(self, results: Dict[str, Any]):
        """Record interpreter and numerical library versions"""
        import sys
        import numpy
        import scipy

        results["environment_info"]["python_version"] = (
            f"{sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}"
        )
        results["environment_info"]["numpy_version"] = numpy.__version__
        results["environment_info"]["scipy_version"] = scipy.__version__

        try:
            import mpmath
            results["environment_info"]["mpmath_version"] = mpmath.__version__
        except ImportError:
            if self.extended_precision:
                results["warnings"].append("mpmath not available - extended precision fallback disabled")


settings = Settings()

os.makedirs(settings.output_dir, exist_ok=True)
