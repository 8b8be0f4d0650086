"""CART trees, random forests and second-order gradient boosting."""
from .boost import BoostConfig, BoostModel, GBTRegressor, fit_gbt, predict_gbt
from .cart import PresortedData, Tree, fit_tree
from .forest import (ForestConfig, ForestModel, RandomForestRegressor, fit_random_forest,
                     predict_forest, tree_predictions)
from .tuning import CALIBRATION_GBT_GRID, tune_gbt, tune_mtry

__all__ = [
    "BoostConfig", "BoostModel", "ForestConfig", "ForestModel", "GBTRegressor", "CALIBRATION_GBT_GRID",
    "PresortedData", "RandomForestRegressor", "Tree", "fit_gbt", "fit_random_forest", "fit_tree",
    "predict_forest", "predict_gbt", "tree_predictions", "tune_gbt", "tune_mtry",
]
