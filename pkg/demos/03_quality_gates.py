"""Sanity checks, the labeling exam and contribution requirements."""
# %%
import numpy as np

from conetools.core import AnnotatedImage, BoundingBox, ConeClass, LabeledObject, ObjectTag
from conetools.quality import ContributionConfig, check_contribution, exam_feedback, grade_exam, sanity_check
from conetools.similarity import FeatureVector


def cone(cls, *box, tags=()):
    return LabeledObject(cls, BoundingBox(*box), tags=frozenset(tags))


# %% Sanity checks flag a stray click (tiny box) and a double-labeled cone.
img = AnnotatedImage("team-a_00001.png", 640, 480, (
    cone(ConeClass.BLUE, 100, 200, 130, 250),
    cone(ConeClass.BLUE, 100, 201, 130, 250),
    cone(ConeClass.YELLOW, 400, 300, 402, 302),
))
for f in sanity_check([img]):
    print(f.rule_id, f.object_index, f.message)

# %% Exam: the hidden ground truth vs. an examinee who missed a tag and mislabeled a class.
truth = [AnnotatedImage("exam_00001.png", 640, 480, (
    cone(ConeClass.BLUE, 50, 200, 80, 250, tags=[ObjectTag.TRUNCATED]),
    cone(ConeClass.YELLOW, 500, 210, 530, 260),
    cone(ConeClass.LARGE_ORANGE, 300, 150, 340, 230),
))]
answer = [truth[0].with_objects([
    cone(ConeClass.BLUE, 51, 201, 80, 250),
    cone(ConeClass.YELLOW, 500, 210, 530, 260),
    cone(ConeClass.SMALL_ORANGE, 301, 150, 340, 229),
])]
report = grade_exam(answer, truth)
print(exam_feedback(report, answer, truth))

# %% Contribution: on-board share and a configurable local similarity cap.
data = [AnnotatedImage(f"team-a_{k:05d}.png", 640, 480, (), {"onboard": k % 3 != 0}) for k in range(9)]
feats = [FeatureVector(d.name, np.random.default_rng(k).standard_normal(64)) for k, d in enumerate(data)]
rep = check_contribution(data, feats, ContributionConfig(max_local_dup_score=1.0))
print(rep.to_json())
