"""Static published reference numbers used for comparison tables."""

# Per-disease test AUC reported for the original CheXNet model
# (Rajpurkar et al., 2017, "CheXNet: Radiologist-Level Pneumonia Detection
# on Chest X-Rays with Deep Learning"), rounded to three decimals.
CHEXNET_2017_AUC: dict[str, float] = {
    "Atelectasis": 0.809,
    "Cardiomegaly": 0.925,
    "Consolidation": 0.790,
    "Edema": 0.888,
    "Effusion": 0.864,
    "Emphysema": 0.937,
    "Fibrosis": 0.805,
    "Hernia": 0.916,
    "Infiltration": 0.735,
    "Mass": 0.868,
    "Nodule": 0.780,
    "Pleural_Thickening": 0.806,
    "Pneumonia": 0.768,
    "Pneumothorax": 0.889,
}
