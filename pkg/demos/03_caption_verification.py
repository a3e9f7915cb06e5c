"""Run the caption-verification checklist over a handful of examples.

Each caption is screened for environment mentions, absence declarations,
unstyled transcript quotes, and missing annotated tags; clips whose
captions imply multiple speakers are dropped wholesale.
"""

from stylealign import check_caption, check_clip, default_rules

CAPTIONS = [
    ("A woman with an Australian accent speaks in a calm, measured tone.",
     {"accent": "Australian", "gender": "female"}, None),
    ("The environment is quiet, featuring only a faint electronic hum.",
     None, None),
    ("No other sounds are present, and the absence of music keeps the focus on speech.",
     None, None),
    ('The speaker says, "I will meet you at the station tomorrow morning at nine."',
     None, "I will meet you at the station tomorrow morning at nine."),
    ("The delivery is brisk and confident.",
     {"gender": "female", "speaking_rate": "fast"}, None),
]


def main():
    rules = default_rules()
    for caption, tags, transcript in CAPTIONS:
        d = check_caption(caption, rules, tags=tags, transcript=transcript)
        items = ",".join(d.violated_items) or "-"
        print(f"{d.verdict:6s} [{items:5s}] {caption[:68]}")
        for item, span in d.evidence:
            print(f"         item {item}: ...{span[:50]}...")

    clip = check_clip(
        ["A single narrator opens the scene.",
         "Two speakers alternate between questions and answers."],
        rules,
    )
    print(f"\nclip-level: {clip.verdict} ({clip.evidence[0][1]})")


if __name__ == "__main__":
    main()
